"""Supervision targets for the detection and regression heads, and the losses.

Tensors are plain numpy arrays laid out row-major ``[grid_h, grid_w, C]``:
the heatmap is ``(grid_h, grid_w)`` and the displacement field is
``(grid_h, grid_w, 16)`` with channels ``(2i, 2i+1)`` holding the pixel
offset ``(du, dv)`` from a cell center to projected vertex ``i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geom import CameraIntrinsics, GeometryError, OrientedBox3, box_vertices, project

logger = logging.getLogger(__name__)

NUM_VERTICES = 8
DISP_CHANNELS = 2 * NUM_VERTICES
SHAPE_MAP_SHAPE = (120, 160, 4)


@dataclass(frozen=True)
class GridSpec:
    grid_w: int = 40
    grid_h: int = 30
    stride_x: float = 16.0
    stride_y: float = 16.0

    def __post_init__(self):
        if self.grid_w <= 0 or self.grid_h <= 0 or self.stride_x <= 0 or self.stride_y <= 0:
            raise ValueError("grid dimensions and strides must be positive")

    @classmethod
    def for_camera(cls, cam: CameraIntrinsics, grid_w: int = 40, grid_h: int = 30) -> GridSpec:
        return cls(grid_w, grid_h, cam.width / grid_w, cam.height / grid_h)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.grid_h, self.grid_w)

    def cell_center(self, gx, gy) -> np.ndarray:
        """Pixel coordinates of a cell's sample point."""
        return np.stack(
            [(np.asarray(gx) + 0.5) * self.stride_x, (np.asarray(gy) + 0.5) * self.stride_y], -1
        )

    def cell_centers(self) -> np.ndarray:
        """All cell centers as a ``(grid_h, grid_w, 2)`` pixel array."""
        gy, gx = np.mgrid[0 : self.grid_h, 0 : self.grid_w]
        return self.cell_center(gx, gy)

    def check_camera(self, cam: CameraIntrinsics):
        if not (
            np.isclose(self.grid_w * self.stride_x, cam.width)
            and np.isclose(self.grid_h * self.stride_y, cam.height)
        ):
            raise ValueError(
                f"grid {self.grid_w}x{self.grid_h} with strides "
                f"({self.stride_x}, {self.stride_y}) does not tile a "
                f"{cam.width}x{cam.height} image"
            )


@dataclass(frozen=True)
class EncoderConfig:
    sigma_factor: float = 0.1
    sigma_min: float = 1.0
    epsilon: float = 0.2

    def __post_init__(self):
        if self.sigma_factor <= 0 or self.sigma_min <= 0:
            raise ValueError("sigma_factor and sigma_min must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")


@dataclass
class EncodedTargets:
    heat: np.ndarray
    disp: np.ndarray
    skipped: list[int] = field(default_factory=list)


def _object_kernels(objects, cam, grid, cfg):
    """Per visible object: (index, center in grid units, sigma in cells, vertices in px)."""
    kernels = []
    for k, box in enumerate(objects):
        if box.center[2] <= 0:
            raise GeometryError(f"object {k}: point behind camera")
        mu_px = project(cam, box.center)
        if not cam.contains(mu_px):
            logger.info("object %d skipped: center projects outside the image", k)
            continue
        verts_px = project(cam, box_vertices(box))
        extent = verts_px.max(axis=0) - verts_px.min(axis=0)
        diag = float(np.hypot(extent[0] / grid.stride_x, extent[1] / grid.stride_y))
        sigma = max(cfg.sigma_factor * diag, cfg.sigma_min)
        mu = mu_px / np.array([grid.stride_x, grid.stride_y])
        kernels.append((k, mu, sigma, verts_px))
    return kernels


def _kernel_heat(grid: GridSpec, mu, sigma) -> np.ndarray:
    gy, gx = np.mgrid[0 : grid.grid_h, 0 : grid.grid_w]
    d2 = (gx + 0.5 - mu[0]) ** 2 + (gy + 0.5 - mu[1]) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def _stacked_heats(kernels, grid) -> np.ndarray:
    if not kernels:
        return np.zeros((0, *grid.shape))
    return np.stack([_kernel_heat(grid, mu, sigma) for _, mu, sigma, _ in kernels])


def skipped_objects(objects, cam: CameraIntrinsics) -> list[int]:
    """Indices of objects whose center projects outside the image."""
    return [k for k, box in enumerate(objects) if not cam.contains(project(cam, box.center))]


def encode_heatmap(
    objects: Sequence[OrientedBox3],
    cam: CameraIntrinsics,
    grid: GridSpec | None = None,
    cfg: EncoderConfig | None = None,
) -> np.ndarray:
    """Max over objects of peak-normalized isotropic Gaussians at projected centers.

    Distances are measured in grid cells between each cell center and the
    projected box center (fractions kept). ``sigma = max(sigma_factor * diag,
    sigma_min)`` where ``diag`` is the diagonal, in cells, of the 2D bounding
    rectangle of the eight projected vertices.
    """
    grid = grid or GridSpec.for_camera(cam)
    cfg = cfg or EncoderConfig()
    heats = _stacked_heats(_object_kernels(objects, cam, grid, cfg), grid)
    if len(heats) == 0:
        return np.zeros(grid.shape)
    return heats.max(axis=0)


def encode_displacements(
    objects: Sequence[OrientedBox3],
    cam: CameraIntrinsics,
    grid: GridSpec | None = None,
    heat: np.ndarray | None = None,
    cfg: EncoderConfig | None = None,
) -> np.ndarray:
    """Per-cell offsets from the cell center to the 8 projected vertices.

    Each cell takes the object with the highest heat there (lowest index on
    ties). Cells where no object reaches ``epsilon`` stay zero. ``heat`` is
    only checked for shape; per-object heats are recomputed for assignment.
    """
    grid = grid or GridSpec.for_camera(cam)
    cfg = cfg or EncoderConfig()
    if heat is not None and np.shape(heat) != grid.shape:
        raise ValueError(f"heatmap shape {np.shape(heat)} does not match grid {grid.shape}")
    kernels = _object_kernels(objects, cam, grid, cfg)
    disp = np.zeros((*grid.shape, DISP_CHANNELS))
    if not kernels:
        return disp
    heats = _stacked_heats(kernels, grid)
    owner = heats.argmax(axis=0)
    supported = heats.max(axis=0) >= cfg.epsilon
    centers = grid.cell_centers()
    for slot, (_, _, _, verts_px) in enumerate(kernels):
        cells = supported & (owner == slot)
        offsets = verts_px[None, :, :] - centers[cells][:, None, :]
        disp[cells] = offsets.reshape(-1, DISP_CHANNELS)
    return disp


def encode_targets(objects, cam, grid=None, cfg=None) -> EncodedTargets:
    grid = grid or GridSpec.for_camera(cam)
    cfg = cfg or EncoderConfig()
    heat = encode_heatmap(objects, cam, grid, cfg)
    disp = encode_displacements(objects, cam, grid, heat, cfg)
    return EncodedTargets(heat, disp, skipped_objects(objects, cam))


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def detection_loss(pred, target) -> float:
    """Mean squared error over all heatmap cells."""
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    _check_same_shape(pred, target)
    return float(np.mean((pred - target) ** 2))


def regression_loss(pred, target, heat, epsilon: float = 0.2) -> float:
    """Mean absolute displacement error over cells with heat above ``epsilon``.

    Since the target is ``x_i - p``, ``|pred + p - x_i|`` equals
    ``|pred - target|``. Returns 0 when no cell is above ``epsilon``.
    """
    pred, target, heat = (np.asarray(a, float) for a in (pred, target, heat))
    _check_same_shape(pred, target)
    if heat.shape != pred.shape[:2]:
        raise ValueError(f"heatmap shape {heat.shape} does not match field {pred.shape}")
    support = heat > epsilon
    if not support.any():
        return 0.0
    return float(np.mean(np.abs(pred[support] - target[support])))


def shape_loss(pred, target, has_label: bool) -> float:
    """Mean squared error of the 4-channel shape map; exactly 0 for unlabeled examples."""
    if not has_label:
        return 0.0
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    _check_same_shape(pred, target)
    if pred.shape[-3:] != SHAPE_MAP_SHAPE:
        raise ValueError(f"shape map must be {SHAPE_MAP_SHAPE}, got {pred.shape}")
    return float(np.mean((pred - target) ** 2))
