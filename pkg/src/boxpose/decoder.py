"""Post-processing: heatmap peaks, vertex decoding, EPnP on box vertices, plane scale."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import maximum_filter

from .geom import (
    VERTEX_SIGNS,
    CameraIntrinsics,
    OrientedBox3,
    Plane3,
    Rotation3,
    project,
)
from .targets import DISP_CHANNELS, NUM_VERTICES, GridSpec

logger = logging.getLogger(__name__)

NULLSPACE_TOL = 1e-8
AXES_DET_TOL = 1e-6


class DegenerateConfigurationError(ArithmeticError):
    """The 2D vertices do not determine a unique box up to scale."""

    def __init__(self, detail: str = ""):
        msg = "degenerate configuration"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class PlaneInconsistentError(ArithmeticError):
    def __init__(self, detail: str = ""):
        msg = "plane inconsistent with detection"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True)
class DecoderConfig:
    peak_threshold: float = 0.5
    nms_radius: int = 1
    max_detections: int = 8

    def __post_init__(self):
        if not 0 < self.peak_threshold < 1:
            raise ValueError("peak_threshold must be in (0, 1)")
        if self.nms_radius < 1:
            raise ValueError("nms_radius must be >= 1")
        if self.max_detections < 0:
            raise ValueError("max_detections must be >= 0")


class Peak(NamedTuple):
    gx: int
    gy: int
    heat: float


@dataclass(frozen=True)
class Detection:
    peak: Peak
    vertices2d: np.ndarray

    @property
    def confidence(self) -> float:
        return self.peak.heat


@dataclass(frozen=True, eq=False)
class EpnpSolution:
    """Box recovered up to scale, normalized so the center has depth 1.

    ``control_points_cam`` rows are the center followed by the three axis
    points; ``control_points_cam[j] - control_points_cam[0]`` spans the full
    box extent along object axis ``j``.
    """

    control_points_cam: np.ndarray
    vertices_cam: np.ndarray
    rotation: Rotation3
    translation_dir: np.ndarray
    size_ratios: np.ndarray
    residual: float

    @property
    def axes(self) -> np.ndarray:
        """Unnormalized axis vectors as rows, shape (3, 3)."""
        return self.control_points_cam[1:] - self.control_points_cam[0]

    @property
    def extents(self) -> np.ndarray:
        """Box extents in the depth-1 normalization."""
        return np.linalg.norm(self.axes, axis=1)

    def box(self, scale: float = 1.0) -> OrientedBox3:
        return OrientedBox3(self.rotation, scale * self.translation_dir, scale * self.extents)


class FrameResult(NamedTuple):
    detection: Detection
    solution: EpnpSolution
    metric_box: OrientedBox3 | None


def extract_peaks(heat, cfg: DecoderConfig | None = None) -> list[Peak]:
    """Local maxima of the heatmap above the threshold, strongest first.

    A cell is a peak when it is >= every cell in its ``(2r+1)^2``
    neighbourhood and strictly greater than any neighbour that precedes it
    in row-major order, so a flat plateau yields exactly one peak.
    """
    cfg = cfg or DecoderConfig()
    heat = np.asarray(heat, dtype=float)
    r = cfg.nms_radius
    size = 2 * r + 1
    local_max = maximum_filter(heat, size=size, mode="constant", cval=-np.inf)
    candidates = (heat >= local_max) & (heat >= cfg.peak_threshold)

    H, W = heat.shape
    peaks = []
    for gy, gx in zip(*np.nonzero(candidates)):
        y0, y1 = max(gy - r, 0), min(gy + r + 1, H)
        x0, x1 = max(gx - r, 0), min(gx + r + 1, W)
        window = heat[y0:y1, x0:x1]
        ys, xs = np.nonzero(window == heat[gy, gx])
        first = min((y0 + y) * W + (x0 + x) for y, x in zip(ys, xs))
        if first == gy * W + gx:
            peaks.append(Peak(int(gx), int(gy), float(heat[gy, gx])))
    # Stable sort keeps row-major order among equal heats.
    peaks.sort(key=lambda p: -p.heat)
    return peaks[: cfg.max_detections]


def decode_vertices(peak: Peak, disp, grid: GridSpec) -> np.ndarray:
    """The 8 projected vertices, shape (8, 2): cell center plus stored offsets."""
    offsets = np.asarray(disp[peak.gy, peak.gx], dtype=float).reshape(NUM_VERTICES, 2)
    return grid.cell_center(peak.gx, peak.gy) + offsets


def control_point_coefficients() -> np.ndarray:
    """Weights of the center and three axis points for each box vertex, shape (8, 4).

    With control points at the center and at center + axis_j (axis_j spanning
    the full extent), vertex i = center + sum_j sign_ij * axis_j / 2.
    """
    alpha = np.empty((NUM_VERTICES, 4))
    alpha[:, 0] = 1.0 - VERTEX_SIGNS.sum(axis=1) / 2.0
    alpha[:, 1:] = VERTEX_SIGNS / 2.0
    return alpha


ALPHA = control_point_coefficients()


def epnp_matrix(vertices2d, cam: CameraIntrinsics) -> np.ndarray:
    """The 16x12 system whose null vector holds the control points in camera frame."""
    uv = np.asarray(vertices2d, dtype=float).reshape(NUM_VERTICES, 2)
    M = np.zeros((2 * NUM_VERTICES, 12))
    for i, (u, v) in enumerate(uv):
        for j in range(4):
            a = ALPHA[i, j]
            M[2 * i, 3 * j] = a * cam.fx
            M[2 * i, 3 * j + 2] = a * (cam.cx - u)
            M[2 * i + 1, 3 * j + 1] = a * cam.fy
            M[2 * i + 1, 3 * j + 2] = a * (cam.cy - v)
    return M


def nearest_rotation(A) -> np.ndarray:
    """Closest proper rotation to ``A`` in the Frobenius norm."""
    U, _, Vt = np.linalg.svd(A)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def solve_epnp(vertices2d, cam: CameraIntrinsics) -> EpnpSolution:
    """Recover the box in camera frame, up to scale, from its 8 projected vertices.

    The null vector of M (equivalently the eigenvector of MᵀM with the
    smallest eigenvalue) is taken from the SVD of M, which avoids squaring
    its condition number. Raises DegenerateConfigurationError when the
    null space is not one-dimensional.
    """
    uv = np.asarray(vertices2d, dtype=float)
    if uv.shape != (NUM_VERTICES, 2) or not np.all(np.isfinite(uv)):
        raise ValueError("expected 8 finite 2D vertices")
    M = epnp_matrix(uv, cam)
    _, s, Vt = np.linalg.svd(M)
    eig = s**2  # eigenvalues of MᵀM, descending
    if eig[-2] <= NULLSPACE_TOL * eig[0]:
        raise DegenerateConfigurationError(
            f"null space dimension > 1 (eigenvalue ratio {eig[-2] / eig[0]:.3g})"
        )
    C = Vt[-1].reshape(4, 3)
    X = ALPHA @ C
    if X[:, 2].mean() < 0:
        C, X = -C, -X
    if C[0, 2] <= 0:
        raise DegenerateConfigurationError("box center does not lie in front of the camera")
    scale = 1.0 / C[0, 2]
    C, X = C * scale, X * scale
    if np.any(X[:, 2] <= 0):
        raise DegenerateConfigurationError("reconstructed vertices behind the camera")

    axes = C[1:] - C[0]
    lengths = np.linalg.norm(axes, axis=1)
    if np.any(lengths <= 0):
        raise DegenerateConfigurationError("collapsed box axis")
    unit_axes = axes / lengths[:, None]
    if abs(np.linalg.det(unit_axes)) < AXES_DET_TOL:
        raise DegenerateConfigurationError("box axes are coplanar")
    R = nearest_rotation(unit_axes.T)
    C.setflags(write=False)
    X.setflags(write=False)
    return EpnpSolution(
        control_points_cam=C,
        vertices_cam=X,
        rotation=Rotation3.from_matrix(R),
        translation_dir=C[0].copy(),
        size_ratios=lengths / lengths.max(),
        residual=float(eig[-1]),
    )


def resolve_scale(sol: EpnpSolution, plane: Plane3) -> OrientedBox3:
    """Scale the box so its lowest vertex (w.r.t. the plane normal) touches the plane."""
    lowest = float(np.min(sol.vertices_cam @ plane.normal))
    if abs(lowest) < 1e-9:
        raise PlaneInconsistentError("lowest vertex is at the plane origin offset")
    s = -plane.d / lowest
    if not s > 0:
        raise PlaneInconsistentError(f"non-positive scale {s:.6g}")
    return sol.box(s)


def reprojection_error(sol: EpnpSolution, vertices2d, cam: CameraIntrinsics) -> np.ndarray:
    """Per-vertex pixel distance between reprojected solution vertices and the input."""
    return np.linalg.norm(project(cam, sol.vertices_cam) - np.asarray(vertices2d), axis=1)


def decode_frame(
    heat,
    disp,
    cam: CameraIntrinsics,
    grid: GridSpec | None = None,
    cfg: DecoderConfig | None = None,
    plane: Plane3 | None = None,
) -> list[FrameResult]:
    """Peaks -> vertices -> EPnP (-> metric box when a plane is given), one result per peak."""
    grid = grid or GridSpec.for_camera(cam)
    heat = np.asarray(heat)
    disp = np.asarray(disp)
    if heat.shape != grid.shape:
        raise ValueError(f"heatmap shape {heat.shape} does not match grid {grid.shape}")
    if disp.shape != (*grid.shape, DISP_CHANNELS):
        raise ValueError(f"displacement shape {disp.shape} does not match grid {grid.shape}")

    results = []
    for peak in extract_peaks(heat, cfg):
        det = Detection(peak, decode_vertices(peak, disp, grid))
        try:
            sol = solve_epnp(det.vertices2d, cam)
        except DegenerateConfigurationError as exc:
            logger.warning("dropping peak at (%d, %d): %s", peak.gx, peak.gy, exc)
            continue
        metric = None
        if plane is not None:
            try:
                metric = resolve_scale(sol, plane)
            except PlaneInconsistentError as exc:
                logger.warning("dropping peak at (%d, %d): %s", peak.gx, peak.gy, exc)
                continue
        results.append(FrameResult(det, sol, metric))
    return results
