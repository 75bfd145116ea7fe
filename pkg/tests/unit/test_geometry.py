import numpy as np
import pytest

from vinstruct.tiling.geometry import (
    CandidateSet,
    GridShape,
    ImageDim,
    TilingPlan,
    default_candidates,
    fit_to_canvas,
    global_context_spec,
    plan_tiling,
    select_resolution,
)


def brute_force_select(dim: ImageDim, candidates: CandidateSet) -> GridShape:
    """Integer-only scorer, independent of the library's Fraction arithmetic."""
    w, h = dim.width, dim.height
    best = None
    for idx, shape in enumerate(candidates.shapes):
        cw, ch = shape.cols * candidates.tile_side, shape.rows * candidates.tile_side
        if cw * h <= ch * w:
            sw, sh = cw, (h * cw) // w
        else:
            sw, sh = (w * ch) // h, ch
        sw, sh = max(1, sw), max(1, sh)
        effective = min(sw * sh, w * h)
        key = (-effective, cw * ch - effective, shape.n_tiles, idx)
        if best is None or key < best[0]:
            best = (key, shape)
    return best[1]


def test_default_candidates_are_listed_shapes_plus_transposes():
    cs = default_candidates()
    names = [str(s) for s in cs.shapes]
    assert names == [
        "1x1", "1x2", "1x3", "1x4", "1x5", "1x6", "2x2", "2x3",
        "2x1", "3x1", "4x1", "5x1", "6x1", "3x2",
    ]
    assert len(set(cs.shapes)) == len(cs.shapes)
    assert cs.tile_side == 224
    assert all(s.n_tiles <= 6 for s in cs.shapes)


def test_default_candidates_max_canvas_is_672_by_448():
    canvases = default_candidates().canvases()
    max_area = max(c.area for c in canvases)
    assert max_area == 672 * 448
    assert {(c.width, c.height) for c in canvases if c.area == max_area} >= {(672, 448), (448, 672)}


def test_candidate_set_rejects_duplicates_and_oversized_shapes():
    with pytest.raises(ValueError):
        CandidateSet(shapes=(GridShape(1, 1), GridShape(1, 1)))
    with pytest.raises(ValueError):
        CandidateSet(shapes=(GridShape(3, 3),), max_tiles=6)
    with pytest.raises(ValueError):
        CandidateSet(shapes=())


def test_image_dim_rejects_non_positive():
    with pytest.raises(ValueError):
        ImageDim(0, 10)
    with pytest.raises(ValueError):
        ImageDim(10, -1)


def test_fit_to_canvas_floors_scaled_sides():
    fit = fit_to_canvas(ImageDim(1000, 600), ImageDim(672, 448))
    assert fit.scaled_width == 672
    assert fit.scaled_height == 403
    assert fit.effective_pixels == 270_816
    assert fit.wasted_pixels == 672 * 448 - 270_816


def test_fit_to_canvas_caps_effective_pixels_when_upscaling():
    fit = fit_to_canvas(ImageDim(100, 100), ImageDim(224, 224))
    assert (fit.scaled_width, fit.scaled_height) == (224, 224)
    assert fit.effective_pixels == 100 * 100


def test_select_resolution_examples():
    cs = default_candidates()
    assert select_resolution(ImageDim(224, 224), cs) == GridShape(1, 1)
    assert select_resolution(ImageDim(1000, 600), cs) == GridShape(2, 3)
    assert select_resolution(ImageDim(600, 1000), cs) == GridShape(3, 2)
    assert select_resolution(ImageDim(100, 100), cs) == GridShape(1, 1)
    assert select_resolution(ImageDim(2000, 200), cs) == GridShape(1, 6)


def test_select_resolution_exact_fit_has_zero_padding():
    cs = default_candidates()
    for shape in cs.shapes:
        dim = shape.canvas(224)
        assert select_resolution(dim, cs) == shape
        plan = plan_tiling(dim, shape)
        assert (plan.pad_left, plan.pad_right, plan.pad_top, plan.pad_bottom) == (0, 0, 0, 0)


def test_select_resolution_matches_brute_force_scorer():
    cs = default_candidates()
    rng = np.random.default_rng(0)
    for w, h in rng.integers(1, 4097, size=(10_000, 2)):
        dim = ImageDim(int(w), int(h))
        assert select_resolution(dim, cs) == brute_force_select(dim, cs), dim


def test_select_resolution_is_transpose_symmetric():
    cs = default_candidates()
    rng = np.random.default_rng(1)
    for w, h in rng.integers(1, 4097, size=(10_000, 2)):
        g = select_resolution(ImageDim(int(w), int(h)), cs)
        assert select_resolution(ImageDim(int(h), int(w)), cs) == g.transpose()


def test_selected_candidate_has_max_effective_pixels():
    cs = default_candidates()
    dim = ImageDim(1234, 567)
    chosen = fit_to_canvas(dim, select_resolution(dim, cs).canvas(224))
    for c in cs.canvases():
        assert chosen.effective_pixels >= fit_to_canvas(dim, c).effective_pixels


def test_plan_tiling_centres_content_with_extra_pixel_bottom_right():
    plan = plan_tiling(ImageDim(1000, 600), GridShape(2, 3))
    assert plan.canvas == ImageDim(672, 448)
    assert plan.scaled_content == ImageDim(672, 403)
    assert (plan.pad_left, plan.pad_right) == (0, 0)
    assert (plan.pad_top, plan.pad_bottom) == (22, 23)


def test_plan_tiling_tiles_are_row_major_and_cover_canvas():
    plan = plan_tiling(ImageDim(1000, 600), GridShape(2, 3))
    assert len(plan.tiles) == 6
    assert [(t.x, t.y) for t in plan.tiles] == [
        (0, 0), (224, 0), (448, 0), (0, 224), (224, 224), (448, 224),
    ]
    assert sum(t.width * t.height for t in plan.tiles) == plan.canvas.area


def test_plan_tiling_padding_sums_for_random_dims():
    cs = default_candidates()
    rng = np.random.default_rng(2)
    for w, h in rng.integers(1, 3000, size=(300, 2)):
        dim = ImageDim(int(w), int(h))
        plan = plan_tiling(dim, select_resolution(dim, cs))
        assert plan.pad_left + plan.scaled_content.width + plan.pad_right == plan.canvas.width
        assert plan.pad_top + plan.scaled_content.height + plan.pad_bottom == plan.canvas.height
        assert 0 <= plan.pad_right - plan.pad_left <= 1
        assert 0 <= plan.pad_bottom - plan.pad_top <= 1


def test_plan_tiling_pads_one_axis_and_tiles_partition_canvas():
    cs = default_candidates()
    rng = np.random.default_rng(5)
    for w, h in rng.integers(1, 4097, size=(10_000, 2)):
        dim = ImageDim(int(w), int(h))
        plan = plan_tiling(dim, select_resolution(dim, cs))
        assert plan.pad_left + plan.pad_right == 0 or plan.pad_top + plan.pad_bottom == 0, dim
        assert plan.pad_left == (plan.canvas.width - plan.scaled_content.width) // 2
        assert plan.pad_top == (plan.canvas.height - plan.scaled_content.height) // 2

        cover = np.zeros((plan.canvas.height, plan.canvas.width), dtype=np.int8)
        for t in plan.tiles:
            cover[t.y : t.y + t.height, t.x : t.x + t.width] += 1
        assert len(plan.tiles) == plan.grid.n_tiles
        assert np.all(cover == 1), dim


def test_plan_tiling_extreme_aspect_ratio_keeps_one_pixel():
    dim = ImageDim(4096, 1)
    plan = plan_tiling(dim, select_resolution(dim, default_candidates()))
    assert plan.scaled_content.height == 1


def test_plan_tiling_upscales_small_image():
    plan = plan_tiling(ImageDim(100, 100), GridShape(1, 1), 224)
    assert plan.scaled_content == ImageDim(224, 224)
    assert (plan.pad_left, plan.pad_top) == (0, 0)


def test_global_context_spec_is_single_square_tile():
    plan = global_context_spec(ImageDim(1000, 600))
    assert plan.grid == GridShape(1, 1)
    assert plan.canvas == ImageDim(224, 224)
    assert plan.scaled_content == ImageDim(224, 134)
    assert (plan.pad_top, plan.pad_bottom) == (45, 45)


def test_tiling_plan_record_round_trip():
    plan = plan_tiling(ImageDim(1000, 600), GridShape(2, 3))
    assert TilingPlan.from_record(plan.to_record()) == plan
