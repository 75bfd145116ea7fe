"""Pixel-space geometry of the any-resolution split.

An input image is aspect-fit onto a canvas of `rows x cols` square tiles, padded
to centre it, and cut into tiles that are encoded independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor
from typing import Any, Dict, List, Tuple

DEFAULT_TILE_SIDE = 224
DEFAULT_MAX_TILES = 6

# Listed shapes followed by their transposes; 2x2 appears once.
_LISTED_SHAPES: Tuple[Tuple[int, int], ...] = (
    (1, 1), (1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (2, 2), (2, 3),
)


@dataclass(frozen=True)
class ImageDim:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"Image dims must be positive, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height

    def to_record(self) -> Dict[str, int]:
        return {"width": self.width, "height": self.height}


@dataclass(frozen=True)
class GridShape:
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"Grid shape must be positive, got {self.rows}x{self.cols}")

    @property
    def n_tiles(self) -> int:
        return self.rows * self.cols

    def transpose(self) -> "GridShape":
        return GridShape(rows=self.cols, cols=self.rows)

    def canvas(self, tile_side: int) -> ImageDim:
        return ImageDim(width=self.cols * tile_side, height=self.rows * tile_side)

    def __str__(self) -> str:
        return f"{self.rows}x{self.cols}"


@dataclass(frozen=True)
class CandidateSet:
    shapes: Tuple[GridShape, ...]
    tile_side: int = DEFAULT_TILE_SIDE
    max_tiles: int = DEFAULT_MAX_TILES

    def __post_init__(self) -> None:
        if self.tile_side < 1:
            raise ValueError("tile_side must be positive")
        if not self.shapes:
            raise ValueError("Candidate set must contain at least one grid shape")
        if len(set(self.shapes)) != len(self.shapes):
            raise ValueError("Candidate set contains duplicate grid shapes")
        too_big = [str(s) for s in self.shapes if s.n_tiles > self.max_tiles]
        if too_big:
            raise ValueError(f"Grid shapes exceed max_tiles={self.max_tiles}: {too_big}")

    def canvases(self) -> List[ImageDim]:
        return [s.canvas(self.tile_side) for s in self.shapes]


@dataclass(frozen=True)
class FitResult:
    scale: float
    scaled_width: int
    scaled_height: int
    effective_pixels: int
    wasted_pixels: int


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    def to_record(self) -> List[int]:
        return [self.x, self.y, self.width, self.height]


@dataclass(frozen=True)
class TilingPlan:
    input: ImageDim
    grid: GridShape
    tile_side: int
    canvas: ImageDim
    scaled_content: ImageDim
    pad_left: int
    pad_right: int
    pad_top: int
    pad_bottom: int
    tiles: Tuple[Rect, ...]

    def to_record(self) -> Dict[str, Any]:
        return {
            "input": self.input.to_record(),
            "grid": {"rows": self.grid.rows, "cols": self.grid.cols},
            "tile_side": self.tile_side,
            "canvas": self.canvas.to_record(),
            "scaled_content": self.scaled_content.to_record(),
            "pad_left": self.pad_left,
            "pad_right": self.pad_right,
            "pad_top": self.pad_top,
            "pad_bottom": self.pad_bottom,
            "tiles": [t.to_record() for t in self.tiles],
        }

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "TilingPlan":
        return cls(
            input=ImageDim(**rec["input"]),
            grid=GridShape(**rec["grid"]),
            tile_side=int(rec["tile_side"]),
            canvas=ImageDim(**rec["canvas"]),
            scaled_content=ImageDim(**rec["scaled_content"]),
            pad_left=int(rec["pad_left"]),
            pad_right=int(rec["pad_right"]),
            pad_top=int(rec["pad_top"]),
            pad_bottom=int(rec["pad_bottom"]),
            tiles=tuple(Rect(*t) for t in rec["tiles"]),
        )


def default_candidates(tile_side: int = DEFAULT_TILE_SIDE) -> CandidateSet:
    """Listed grid shapes plus their transposes, deduplicated (14 shapes of up to six tiles).

    The largest canvases are 672x448 and 448x672.
    """
    shapes: List[GridShape] = [GridShape(r, c) for r, c in _LISTED_SHAPES]
    for r, c in _LISTED_SHAPES:
        t = GridShape(c, r)
        if t not in shapes:
            shapes.append(t)
    return CandidateSet(shapes=tuple(shapes), tile_side=tile_side, max_tiles=DEFAULT_MAX_TILES)


def _exact_scale(dim: ImageDim, canvas: ImageDim) -> Fraction:
    return min(Fraction(canvas.width, dim.width), Fraction(canvas.height, dim.height))


def fit_to_canvas(dim: ImageDim, canvas: ImageDim) -> FitResult:
    """Aspect-preserving fit of `dim` into `canvas`.

    Scaled sides are floored so content never exceeds the canvas, but kept at
    least one pixel for extreme aspect ratios; effective pixels are capped at
    the original area so upscaling earns nothing.
    """
    scale = _exact_scale(dim, canvas)
    scaled_w = max(1, floor(dim.width * scale))
    scaled_h = max(1, floor(dim.height * scale))
    effective = min(scaled_w * scaled_h, dim.area)
    return FitResult(
        scale=float(scale),
        scaled_width=scaled_w,
        scaled_height=scaled_h,
        effective_pixels=effective,
        wasted_pixels=canvas.area - effective,
    )


def select_resolution(dim: ImageDim, candidates: CandidateSet) -> GridShape:
    """Pick the grid whose canvas preserves the most detail.

    Ranked by most effective pixels, then least wasted pixels, then fewest
    tiles, then position in the candidate list.
    """
    best_key: Tuple[int, int, int, int] | None = None
    best: GridShape | None = None
    for idx, shape in enumerate(candidates.shapes):
        fit = fit_to_canvas(dim, shape.canvas(candidates.tile_side))
        key = (-fit.effective_pixels, fit.wasted_pixels, shape.n_tiles, idx)
        if best_key is None or key < best_key:
            best_key, best = key, shape
    assert best is not None
    return best


def plan_tiling(dim: ImageDim, grid: GridShape, tile_side: int = DEFAULT_TILE_SIDE) -> TilingPlan:
    if tile_side < 1:
        raise ValueError("tile_side must be positive")

    canvas = grid.canvas(tile_side)
    fit = fit_to_canvas(dim, canvas)

    pad_x = canvas.width - fit.scaled_width
    pad_y = canvas.height - fit.scaled_height
    # odd padding: the extra pixel goes right / bottom
    pad_left, pad_top = pad_x // 2, pad_y // 2

    tiles = tuple(
        Rect(x=c * tile_side, y=r * tile_side, width=tile_side, height=tile_side)
        for r in range(grid.rows)
        for c in range(grid.cols)
    )
    return TilingPlan(
        input=dim,
        grid=grid,
        tile_side=tile_side,
        canvas=canvas,
        scaled_content=ImageDim(fit.scaled_width, fit.scaled_height),
        pad_left=pad_left,
        pad_right=pad_x - pad_left,
        pad_top=pad_top,
        pad_bottom=pad_y - pad_top,
        tiles=tiles,
    )


def global_context_spec(dim: ImageDim, side: int = DEFAULT_TILE_SIDE) -> TilingPlan:
    """Pad-and-resize of the whole image onto a single `side x side` tile."""
    if side < 1:
        raise ValueError("side must be positive")
    return plan_tiling(dim, GridShape(1, 1), side)
