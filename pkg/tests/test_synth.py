import numpy as np
import pytest

from boxpose.synth import (
    CompositeError,
    ForegroundAsset,
    Placement,
    PlacementConfig,
    blend,
    composite,
    placed_corners,
    sample_placement,
    to_uint8,
)


def make_asset(w=24, h=16, seed=0):
    rng = np.random.default_rng(seed)
    rgba = np.zeros((h, w, 4), np.uint8)
    rgba[..., :3] = rng.integers(0, 256, (h, w, 3))
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.hypot((xx - (w - 1) / 2) / (w / 2), (yy - (h - 1) / 2) / (h / 2))
    rgba[..., 3] = np.clip((1.2 - r) * 400, 0, 255).astype(np.uint8)
    return ForegroundAsset(rgba)


def make_bg(w=64, h=48, seed=1):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


def test_blend_endpoints_and_midpoint():
    fg, bg = np.array([200, 0, 0]), np.array([0, 0, 100])
    assert np.array_equal(blend(fg, bg, 1.0), fg)
    assert np.array_equal(blend(fg, bg, 0.0), bg)
    assert np.array_equal(to_uint8(blend(fg, bg, 0.5)), [100, 0, 50])


def test_identity_placement_endpoints_and_mask():
    asset, bg = make_asset(), make_bg()
    s = composite(asset, bg, Placement())
    h, w = asset.height, asset.width
    a = asset.rgba[..., 3]
    opaque, clear = a == 255, a == 0
    assert np.array_equal(s.image[:h, :w][opaque], asset.rgba[..., :3][opaque])
    assert np.array_equal(s.image[:h, :w][clear], bg[:h, :w][clear])
    assert np.array_equal(s.mask[:h, :w], a > 127)
    assert not s.mask[h:].any() and not s.mask[:, w:].any()
    assert np.array_equal(s.image[h:], bg[h:])


def test_identity_placement_partial_alpha_blend():
    rgba = np.zeros((4, 4, 4), np.uint8)
    rgba[..., 0] = 200
    rgba[..., 3] = 128
    s = composite(ForegroundAsset(rgba), np.full((8, 8, 3), [0, 0, 100], np.uint8), Placement())
    alpha = 128 / 255
    assert np.array_equal(s.image[:4, :4], np.broadcast_to(to_uint8([200 * alpha, 0, 100 * (1 - alpha)]), (4, 4, 3)))


def test_untouched_pixels_equal_background():
    asset, bg = make_asset(), make_bg()
    s = composite(asset, bg, Placement(20.3, 10.7, 33.0, 1.3))
    untouched = s.alpha == 0
    assert untouched.any()
    assert np.array_equal(s.image[untouched], bg[untouched])
    assert np.array_equal(s.mask, s.alpha > 0.5)


def test_full_cover_asset_yields_foreground():
    rgba = np.zeros((48, 64, 4), np.uint8)
    rgba[..., :3] = make_bg(seed=5)
    rgba[..., 3] = 255
    s = composite(ForegroundAsset(rgba), make_bg(), Placement())
    assert np.array_equal(s.image, rgba[..., :3])
    assert s.mask.all()


def test_translation_by_whole_pixels_is_exact_shift():
    asset, bg = make_asset(), make_bg()
    s = composite(asset, bg, Placement(10, 7))
    ref = composite(asset, bg[7:, 10:].copy(), Placement())
    assert np.array_equal(s.image[7:, 10:], ref.image)


def test_zero_alpha_asset_rejected():
    with pytest.raises(CompositeError):
        ForegroundAsset(np.zeros((4, 4, 4), np.uint8))


def test_offscreen_placement_rejected():
    with pytest.raises(CompositeError):
        composite(make_asset(), make_bg(), Placement(500, 500))


def test_sample_placement_deterministic():
    cfg = PlacementConfig()
    assert sample_placement(42, (640, 480), (100, 80), cfg) == sample_placement(42, (640, 480), (100, 80), cfg)


def test_sample_placement_stays_in_frame():
    cfg = PlacementConfig(scale_min=0.5, scale_max=3.0, overhang=0.0)
    for seed in range(200):
        pl = sample_placement(seed, (200, 150), (60, 40), cfg)
        c = placed_corners(60, 40, pl)
        assert c.min() >= -1e-9
        assert c[:, 0].max() <= 199 + 1e-9 and c[:, 1].max() <= 149 + 1e-9
        assert cfg.scale_min <= pl.scale <= cfg.scale_max


def test_sample_placement_overhang_fraction():
    cfg = PlacementConfig(overhang=0.3)
    for seed in range(200):
        pl = sample_placement(seed, (200, 150), (60, 40), cfg)
        c = placed_corners(60, 40, pl)
        lo, hi = c.min(axis=0), c.max(axis=0)
        inside = np.clip(hi, 0, [199, 149]) - np.clip(lo, 0, [199, 149])
        assert np.prod(inside) / np.prod(hi - lo) >= 0.7 - 1e-9


def test_sample_placement_seeds_differ():
    cfg = PlacementConfig()
    placements = {sample_placement(s, (640, 480), (100, 80), cfg) for s in range(100)}
    assert len(placements) >= 99


def test_sample_placement_infeasible():
    with pytest.raises(CompositeError, match="infeasible"):
        sample_placement(0, (50, 50), (200, 200), PlacementConfig(scale_min=1.0, scale_max=2.0))
