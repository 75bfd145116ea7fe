"""Feature-space layout of a tiled image.

Per-tile feature grids are merged into one map, rows/cols that cover only
padding are dropped, a row-end marker follows every kept row and the global
context grid is prepended when flattening.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from vinstruct.tiling.geometry import (
    DEFAULT_TILE_SIDE,
    CandidateSet,
    GridShape,
    ImageDim,
    TilingPlan,
    global_context_spec,
    plan_tiling,
    select_resolution,
)

logger = logging.getLogger(__name__)

ROW_END = "ROW_END"
_STAT_FEATURES = 4  # mean, min, max, variance


@dataclass(frozen=True)
class EncoderProfile:
    tile_side: int = DEFAULT_TILE_SIDE
    patch_side: int = 14
    feature_dim: int = 8

    def __post_init__(self) -> None:
        if self.tile_side < 1 or self.patch_side < 1:
            raise ValueError("tile_side and patch_side must be positive")
        if self.tile_side % self.patch_side != 0:
            raise ValueError(
                f"tile_side {self.tile_side} is not divisible by patch_side {self.patch_side}"
            )
        if self.feature_dim < _STAT_FEATURES:
            raise ValueError(f"feature_dim must be >= {_STAT_FEATURES}")

    @property
    def patches_per_side(self) -> int:
        return self.tile_side // self.patch_side


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """Row-major grid of feature vectors; `values` has shape (rows, cols, dim)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise ValueError(f"FeatureGrid values must be 3-D, got shape {self.values.shape}")

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])

    @property
    def feature_dim(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True)
class LayoutPlan:
    grid: GridShape
    merged_rows: int
    merged_cols: int
    kept_row_start: int
    kept_row_count: int
    kept_col_start: int
    kept_col_count: int
    rowend_count: int
    global_tokens: int
    highres_tokens: int
    total_tokens: int

    @property
    def kept_rows(self) -> range:
        return range(self.kept_row_start, self.kept_row_start + self.kept_row_count)

    @property
    def kept_cols(self) -> range:
        return range(self.kept_col_start, self.kept_col_start + self.kept_col_count)

    def to_record(self) -> Dict[str, Any]:
        return {
            "grid": {"rows": self.grid.rows, "cols": self.grid.cols},
            "merged_rows": self.merged_rows,
            "merged_cols": self.merged_cols,
            "kept_row_start": self.kept_row_start,
            "kept_row_count": self.kept_row_count,
            "kept_col_start": self.kept_col_start,
            "kept_col_count": self.kept_col_count,
            "rowend_count": self.rowend_count,
            "global_tokens": self.global_tokens,
            "highres_tokens": self.highres_tokens,
            "total_tokens": self.total_tokens,
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "LayoutPlan":
        fields = {k: int(v) for k, v in rec.items() if k != "grid"}
        return cls(grid=GridShape(**rec["grid"]), **fields)


@dataclass(frozen=True)
class GlobalFeature:
    index: int


@dataclass(frozen=True)
class GridFeature:
    row: int
    col: int


@dataclass(frozen=True)
class RowEnd:
    row: int


Token = Union[GlobalFeature, GridFeature, RowEnd]


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Flattened visual tokens.

    `features` holds one vector per feature item in sequence order; RowEnd items
    carry no vector (their embedding belongs to the language model).
    """

    items: Tuple[Token, ...]
    features: np.ndarray

    def __len__(self) -> int:
        return len(self.items)

    def rowend_positions(self) -> List[int]:
        return [i for i, it in enumerate(self.items) if isinstance(it, RowEnd)]

    def to_record(self) -> List[Any]:
        out: List[Any] = []
        for it in self.items:
            if isinstance(it, GlobalFeature):
                out.append(["global", it.index])
            elif isinstance(it, GridFeature):
                out.append(["grid", it.row, it.col])
            else:
                out.append([ROW_END, it.row])
        return out


# ---- stub encoder -----------------------------------------------------------


def encode_tile_stub(tile_pixels: np.ndarray, profile: EncoderProfile) -> FeatureGrid:
    """Deterministic stand-in for a vision encoder.

    Each patch becomes [mean, min, max, variance] of its pixel block, zero-padded
    to `feature_dim`.
    """
    tile = np.asarray(tile_pixels, dtype=np.float64)
    side, ps, pps = profile.tile_side, profile.patch_side, profile.patches_per_side
    if tile.shape != (side, side):
        raise ValueError(f"Tile buffer must be {side}x{side}, got shape {tile.shape}")
    if tile.size and (tile.min() < 0.0 or tile.max() > 1.0):
        raise ValueError("Tile intensities must lie in [0, 1]")

    blocks = tile.reshape(pps, ps, pps, ps).transpose(0, 2, 1, 3).reshape(pps, pps, ps * ps)
    values = np.zeros((pps, pps, profile.feature_dim), dtype=np.float64)
    values[..., 0] = blocks.mean(axis=-1)
    values[..., 1] = blocks.min(axis=-1)
    values[..., 2] = blocks.max(axis=-1)
    values[..., 3] = blocks.var(axis=-1)
    return FeatureGrid(values)


def merge_tiles(grid: GridShape, tiles: Sequence[FeatureGrid]) -> FeatureGrid:
    """Stitch row-major per-tile grids back into one (rows*pps, cols*pps) map."""
    if len(tiles) != grid.n_tiles:
        raise ValueError(f"Expected {grid.n_tiles} tiles for grid {grid}, got {len(tiles)}")
    first = tiles[0]
    for i, t in enumerate(tiles):
        if t.values.shape != first.values.shape or t.rows != t.cols:
            raise ValueError(f"Tile {i} has shape {t.values.shape}, expected {first.values.shape}")

    pps, dim = first.rows, first.feature_dim
    stacked = np.stack([t.values for t in tiles]).reshape(grid.rows, grid.cols, pps, pps, dim)
    merged = stacked.transpose(0, 2, 1, 3, 4).reshape(grid.rows * pps, grid.cols * pps, dim)
    return FeatureGrid(merged)


# ---- layout -----------------------------------------------------------------


def _kept_range(pad_lead: int, content: int, patch_side: int) -> range:
    # a strip [k*ps, (k+1)*ps) is kept iff it touches [pad_lead, pad_lead + content)
    start = pad_lead // patch_side
    stop = -(-(pad_lead + content) // patch_side)
    return range(start, stop)


def unpad_layout(plan: TilingPlan, profile: EncoderProfile) -> Tuple[range, range]:
    """Merged-feature rows and cols whose pixel strips contain any content."""
    ps = profile.patch_side
    if plan.canvas.width % ps or plan.canvas.height % ps:
        raise ValueError(
            f"Canvas {plan.canvas.width}x{plan.canvas.height} is not divisible by patch_side {ps}"
        )
    rows = _kept_range(plan.pad_top, plan.scaled_content.height, ps)
    cols = _kept_range(plan.pad_left, plan.scaled_content.width, ps)
    return rows, cols


def build_layout(plan: TilingPlan, profile: EncoderProfile) -> LayoutPlan:
    rows, cols = unpad_layout(plan, profile)
    merged_rows = plan.canvas.height // profile.patch_side
    merged_cols = plan.canvas.width // profile.patch_side
    global_tokens = profile.patches_per_side**2
    highres = len(rows) * len(cols) + len(rows)
    return LayoutPlan(
        grid=plan.grid,
        merged_rows=merged_rows,
        merged_cols=merged_cols,
        kept_row_start=rows.start,
        kept_row_count=len(rows),
        kept_col_start=cols.start,
        kept_col_count=len(cols),
        rowend_count=len(rows),
        global_tokens=global_tokens,
        highres_tokens=highres,
        total_tokens=global_tokens + highres,
    )


def flatten(merged: FeatureGrid, global_grid: FeatureGrid, layout: LayoutPlan) -> TokenSequence:
    """Global features row-major, then kept high-res rows each closed by a RowEnd."""
    if (merged.rows, merged.cols) != (layout.merged_rows, layout.merged_cols):
        raise ValueError(
            f"Merged grid {merged.rows}x{merged.cols} does not match layout "
            f"{layout.merged_rows}x{layout.merged_cols}"
        )
    if global_grid.rows * global_grid.cols != layout.global_tokens:
        raise ValueError(
            f"Global grid has {global_grid.rows * global_grid.cols} cells, "
            f"layout expects {layout.global_tokens}"
        )
    if global_grid.feature_dim != merged.feature_dim:
        raise ValueError("Global and merged grids differ in feature_dim")

    items: List[Token] = [GlobalFeature(i) for i in range(layout.global_tokens)]
    for r in layout.kept_rows:
        items.extend(GridFeature(r, c) for c in layout.kept_cols)
        items.append(RowEnd(r))

    kept = merged.values[layout.kept_rows.start : layout.kept_rows.stop,
                         layout.kept_cols.start : layout.kept_cols.stop]
    features = np.concatenate(
        [
            global_grid.values.reshape(-1, global_grid.feature_dim),
            kept.reshape(-1, merged.feature_dim),
        ]
    )
    return TokenSequence(items=tuple(items), features=features)


def token_budget(
    dim: ImageDim, candidates: CandidateSet, profile: EncoderProfile
) -> LayoutPlan:
    if candidates.tile_side != profile.tile_side:
        raise ValueError(
            f"Candidate tile_side {candidates.tile_side} != encoder tile_side {profile.tile_side}"
        )
    grid = select_resolution(dim, candidates)
    return build_layout(plan_tiling(dim, grid, candidates.tile_side), profile)


@dataclass(frozen=True)
class BudgetSummary:
    images: int
    total_tokens: int
    mean_tokens: Optional[float]
    max_tokens: int
    grid_counts: Dict[str, int]

    def to_record(self) -> Dict[str, Any]:
        return {
            "images": self.images,
            "total_tokens": self.total_tokens,
            "mean_tokens": None if self.mean_tokens is None else round(self.mean_tokens, 3),
            "max_tokens": self.max_tokens,
            "grid_counts": dict(self.grid_counts),
        }


def budget_records(
    dims: Iterable[ImageDim], candidates: CandidateSet, profile: EncoderProfile
) -> Tuple[List[LayoutPlan], BudgetSummary]:
    layouts = [token_budget(d, candidates, profile) for d in dims]
    totals = np.array([lay.total_tokens for lay in layouts], dtype=np.int64)
    grids = Counter(str(lay.grid) for lay in layouts)
    summary = BudgetSummary(
        images=len(layouts),
        total_tokens=int(totals.sum()) if len(totals) else 0,
        mean_tokens=float(totals.mean()) if len(totals) else None,
        max_tokens=int(totals.max()) if len(totals) else 0,
        grid_counts=dict(sorted(grids.items())),
    )
    return layouts, summary


# ---- pixel plumbing for the stub encoder -------------------------------------

Resampler = Callable[[np.ndarray, ImageDim], np.ndarray]


def nearest_resample(image: np.ndarray, size: ImageDim) -> np.ndarray:
    """Nearest-neighbour index gather; stands in for a real interpolating resampler."""
    h, w = image.shape
    ys = (np.arange(size.height) * h) // size.height
    xs = (np.arange(size.width) * w) // size.width
    return image[ys[:, None], xs[None, :]]


def compose_canvas(
    image: np.ndarray, plan: TilingPlan, resampler: Resampler = nearest_resample
) -> np.ndarray:
    """Resize `image` to the plan's scaled content and paste it centred on a zero canvas."""
    img = np.asarray(image, dtype=np.float64)
    if img.shape != (plan.input.height, plan.input.width):
        raise ValueError(
            f"Image buffer shape {img.shape} does not match plan input "
            f"{plan.input.height}x{plan.input.width}"
        )
    content = resampler(img, plan.scaled_content)
    canvas = np.zeros((plan.canvas.height, plan.canvas.width), dtype=np.float64)
    y0, x0 = plan.pad_top, plan.pad_left
    canvas[y0 : y0 + plan.scaled_content.height, x0 : x0 + plan.scaled_content.width] = content
    return canvas


def encode_image(
    image: np.ndarray,
    plan: TilingPlan,
    profile: EncoderProfile,
    *,
    resampler: Resampler = nearest_resample,
    n_jobs: int = 1,
) -> FeatureGrid:
    """Encode every tile of the plan's canvas and merge by tile index."""
    if plan.tile_side != profile.tile_side:
        raise ValueError("Plan tile_side does not match encoder tile_side")
    canvas = compose_canvas(image, plan, resampler)
    crops = [canvas[t.y : t.y + t.height, t.x : t.x + t.width] for t in plan.tiles]
    # joblib returns results in submission order, whatever order they finish in
    grids = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(encode_tile_stub)(crop, profile) for crop in crops
    )
    logger.debug("Encoded %d tiles for grid %s", len(grids), plan.grid)
    return merge_tiles(plan.grid, grids)


def encode_global(
    image: np.ndarray, profile: EncoderProfile, *, resampler: Resampler = nearest_resample
) -> FeatureGrid:
    img = np.asarray(image)
    plan = global_context_spec(ImageDim(width=img.shape[1], height=img.shape[0]), profile.tile_side)
    return encode_tile_stub(compose_canvas(img, plan, resampler), profile)
