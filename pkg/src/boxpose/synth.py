"""Synthetic 2D compositing: paste alpha-matted foregrounds onto backgrounds.

Pixel coordinates refer to pixel centers: pixel ``(row, col)`` sits at
``(x=col, y=row)``. A placement maps asset point ``s`` to background point
``t + c + scale * R(theta) (s - c)`` where ``c`` is the asset center, so the
identity placement leaves the asset at the background's top-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CompositeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ForegroundAsset:
    rgba: np.ndarray

    def __post_init__(self):
        rgba = np.asarray(self.rgba)
        if rgba.ndim != 3 or rgba.shape[2] != 4 or rgba.dtype != np.uint8:
            raise CompositeError(f"asset must be an 8-bit RGBA raster, got {rgba.dtype} {rgba.shape}")
        if not np.any(rgba[..., 3] > 0):
            raise CompositeError("asset has no pixels with alpha > 0")
        rgba = rgba.copy()
        rgba.setflags(write=False)
        object.__setattr__(self, "rgba", rgba)

    @property
    def width(self) -> int:
        return self.rgba.shape[1]

    @property
    def height(self) -> int:
        return self.rgba.shape[0]

    def alpha_bbox(self) -> tuple[int, int, int, int]:
        """``(x0, y0, x1, y1)`` inclusive bounds of the alpha > 0 support."""
        ys, xs = np.nonzero(self.rgba[..., 3])
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


@dataclass(frozen=True)
class Placement:
    tx: float = 0.0
    ty: float = 0.0
    rotation_deg: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise CompositeError("placement scale must be positive")


@dataclass(frozen=True)
class PlacementConfig:
    scale_min: float = 0.5
    scale_max: float = 1.5
    rotation_min_deg: float = -180.0
    rotation_max_deg: float = 180.0
    overhang: float = 0.0

    def __post_init__(self):
        if not 0 < self.scale_min <= self.scale_max:
            raise CompositeError("need 0 < scale_min <= scale_max")
        if self.rotation_min_deg > self.rotation_max_deg:
            raise CompositeError("empty rotation range")
        if not 0 <= self.overhang < 1:
            raise CompositeError("overhang must be in [0, 1)")


@dataclass
class CompositeSample:
    image: np.ndarray
    mask: np.ndarray
    alpha: np.ndarray
    placement: Placement
    source_ids: tuple = ()
    seed: int | None = None


def _rotation(theta_deg: float) -> np.ndarray:
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


def _asset_center(width: int, height: int) -> np.ndarray:
    return np.array([(width - 1) / 2.0, (height - 1) / 2.0])


def placed_corners(width: int, height: int, pl: Placement) -> np.ndarray:
    """Background coordinates of the asset rectangle's four corners."""
    c = _asset_center(width, height)
    corners = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], float)
    return (corners - c) @ (pl.scale * _rotation(pl.rotation_deg)).T + c + [pl.tx, pl.ty]


def warp_premultiplied(fg: ForegroundAsset, out_shape, pl: Placement) -> np.ndarray:
    """Bilinearly resample the asset into the background grid.

    Returns premultiplied ``(H, W, 4)`` floats: RGB * alpha (0-255 scale) and
    alpha in [0, 1]. Samples outside the asset are fully transparent.
    """
    H, W = out_shape
    rgba = fg.rgba.astype(float)
    alpha = rgba[..., 3] / 255.0
    premult = np.dstack([rgba[..., :3] * alpha[..., None], alpha])
    # Zero border so out-of-range taps read transparent.
    padded = np.pad(premult, ((1, 1), (1, 1), (0, 0)))

    c = _asset_center(fg.width, fg.height)
    inv = _rotation(-pl.rotation_deg) / pl.scale
    ys, xs = np.mgrid[0:H, 0:W]
    dst = np.stack([xs - pl.tx - c[0], ys - pl.ty - c[1]], axis=-1).astype(float)
    src = dst @ inv.T + c

    sx, sy = src[..., 0] + 1.0, src[..., 1] + 1.0
    inside = (sx > -1e-9) & (sx < fg.width + 1) & (sy > -1e-9) & (sy < fg.height + 1)
    sx = np.clip(sx, 0.0, fg.width + 1.0 - 1e-9)
    sy = np.clip(sy, 0.0, fg.height + 1.0 - 1e-9)
    x0, y0 = np.floor(sx).astype(int), np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, fg.width + 1)
    y1 = np.minimum(y0 + 1, fg.height + 1)
    fx, fy = (sx - x0)[..., None], (sy - y0)[..., None]
    out = (
        padded[y0, x0] * (1 - fx) * (1 - fy)
        + padded[y0, x1] * fx * (1 - fy)
        + padded[y1, x0] * (1 - fx) * fy
        + padded[y1, x1] * fx * fy
    )
    out[~inside] = 0.0
    return out


def blend(fg_rgb, bg_rgb, alpha) -> np.ndarray:
    """Straight-alpha blend ``alpha * fg + (1 - alpha) * bg`` in float."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha[..., None] * np.asarray(fg_rgb, float) + (1.0 - alpha[..., None]) * np.asarray(bg_rgb, float)


def to_uint8(values) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def composite(
    fg: ForegroundAsset,
    bg,
    pl: Placement,
    alpha_threshold: float = 0.5,
    source_ids: tuple = (),
    seed: int | None = None,
) -> CompositeSample:
    """Paste ``fg`` onto the RGB background ``bg`` and derive the binary mask.

    Pixels the warped asset does not touch (alpha exactly 0) are copied
    from the background unchanged.
    """
    bg = np.asarray(bg)
    if bg.ndim != 3 or bg.shape[2] != 3 or bg.dtype != np.uint8:
        raise CompositeError(f"background must be an 8-bit RGB raster, got {bg.dtype} {bg.shape}")
    warped = warp_premultiplied(fg, bg.shape[:2], pl)
    alpha = np.clip(warped[..., 3], 0.0, 1.0)
    if not np.any(alpha > 0):
        raise CompositeError("placement leaves no foreground pixels inside the frame")
    # Premultiplied "over": the fg term already carries alpha.
    out = warped[..., :3] + (1.0 - alpha[..., None]) * bg.astype(float)
    image = np.where((alpha > 0)[..., None], to_uint8(out), bg)
    mask = alpha > alpha_threshold
    return CompositeSample(image, mask, alpha, pl, tuple(source_ids), seed)


def sample_placement(
    rng,
    bg_size: tuple[int, int],
    fg_size: tuple[int, int],
    cfg: PlacementConfig | None = None,
) -> Placement:
    """Random placement keeping at least ``1 - overhang`` of the placed asset box in frame.

    ``bg_size`` and ``fg_size`` are ``(width, height)``. ``rng`` is a seed or a
    numpy Generator. Overhang is split evenly between the two axes, so the
    in-frame area fraction is at least ``(1 - per_axis)^2 = 1 - overhang``.
    """
    cfg = cfg or PlacementConfig()
    rng = np.random.default_rng(rng)
    bw, bh = bg_size
    fw, fh = fg_size
    keep = math.sqrt(1.0 - cfg.overhang)

    def extent(theta, scale):
        corners = placed_corners(fw, fh, Placement(0.0, 0.0, theta, scale))
        return corners.max(axis=0) - corners.min(axis=0)

    def max_scale(theta):
        e = extent(theta, 1.0)
        limits = [b / (keep * ex) for b, ex in zip((bw - 1, bh - 1), e) if ex > 0]
        return min(limits) if limits else math.inf

    # Feasibility is checked over the whole rotation range, not just the draw.
    thetas = np.linspace(cfg.rotation_min_deg, cfg.rotation_max_deg, 181)
    if min(max_scale(t) for t in thetas) < cfg.scale_min:
        raise CompositeError(
            f"infeasible placement: a {fw}x{fh} asset at scale {cfg.scale_min} "
            f"does not fit a {bw}x{bh} background"
        )

    theta = float(rng.uniform(cfg.rotation_min_deg, cfg.rotation_max_deg))
    scale = float(rng.uniform(cfg.scale_min, min(cfg.scale_max, max_scale(theta))))
    corners = placed_corners(fw, fh, Placement(0.0, 0.0, theta, scale))
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    span = hi - lo
    slack = (1.0 - keep) * span
    # Translation range keeps [lo + t, hi + t] within [-slack, size - 1 + slack].
    t_min = -slack - lo
    t_max = np.array([bw - 1, bh - 1]) + slack - hi
    tx = float(rng.uniform(t_min[0], t_max[0]))
    ty = float(rng.uniform(t_min[1], t_max[1]))
    return Placement(tx, ty, theta, scale)
