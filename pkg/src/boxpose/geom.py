"""Camera model, rotations, oriented boxes and planes.

Conventions: image axes x-right / y-down, camera frame z-forward (right
handed). Box ``size`` is the full extent along each object axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

# Vertex i carries sign +1 on axis k when bit k of i is set.
VERTEX_SIGNS = np.array(
    [[1.0 if (i >> k) & 1 else -1.0 for k in range(3)] for i in range(8)]
)

# The 12 box edges as vertex index pairs differing in exactly one bit.
BOX_EDGES = tuple(
    (i, i | (1 << k)) for k in range(3) for i in range(8) if not (i >> k) & 1
)


class GeometryError(ValueError):
    """Raised on invalid geometric input (e.g. a point behind the camera)."""


def _frozen_array(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @classmethod
    def simple(cls, f: float, cx: float, cy: float, width: int = 640, height: int = 480):
        return cls(float(f), float(f), float(cx), float(cy), int(width), int(height))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def contains(self, uv) -> bool:
        u, v = uv
        return 0.0 <= u < self.width and 0.0 <= v < self.height


@dataclass(frozen=True, eq=False)
class Rotation3:
    """Unit quaternion ``(w, x, y, z)``. Normalized on construction."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        q = np.array([self.w, self.x, self.y, self.z], dtype=float)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise GeometryError("quaternion must be finite and non-zero")
        q /= n
        for name, val in zip("wxyz", q):
            object.__setattr__(self, name, float(val))

    @classmethod
    def identity(cls) -> Rotation3:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_quat(cls, q) -> Rotation3:
        w, x, y, z = (float(c) for c in q)
        return cls(w, x, y, z)

    @classmethod
    def from_matrix(cls, R) -> Rotation3:
        R = np.asarray(R, dtype=float)
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise GeometryError("matrix is not a proper rotation")
        x, y, z, w = _ScipyRotation.from_matrix(R).as_quat()
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> Rotation3:
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        x, y, z, w = _ScipyRotation.from_rotvec(axis * angle).as_quat()
        return cls(w, x, y, z)

    @classmethod
    def random(cls, rng: np.random.Generator) -> Rotation3:
        # Uniform on SO(3): a normalized 4D Gaussian.
        q = rng.normal(size=4)
        return cls(*q)

    def as_quat(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )

    def __matmul__(self, other: Rotation3) -> Rotation3:
        return Rotation3.from_matrix(self.matrix() @ other.matrix())

    def __repr__(self):
        return f"Rotation3(w={self.w:.6g}, x={self.x:.6g}, y={self.y:.6g}, z={self.z:.6g})"


def geodesic_distance(R1, R2) -> float:
    """Angle in radians of the relative rotation ``R1ᵀ R2``."""
    if isinstance(R1, Rotation3):
        R1 = R1.matrix()
    if isinstance(R2, Rotation3):
        R2 = R2.matrix()
    # arccos loses precision near 0; use the atan2 form.
    rel = np.asarray(R1).T @ np.asarray(R2)
    skew = np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
    return float(np.arctan2(0.5 * np.linalg.norm(skew), 0.5 * (np.trace(rel) - 1.0)))


@dataclass(frozen=True, eq=False)
class OrientedBox3:
    rotation: Rotation3
    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center, (3,)))
        object.__setattr__(self, "size", _frozen_array(self.size, (3,)))
        if not np.all(self.size > 0):
            raise GeometryError(f"box size must be positive, got {self.size}")
        if not np.all(np.isfinite(self.center)):
            raise GeometryError("box center must be finite")

    @property
    def R(self) -> np.ndarray:
        return self.rotation.matrix()

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def vertices(self) -> np.ndarray:
        return box_vertices(self)

    def transformed(self, R, t) -> OrientedBox3:
        """Apply the rigid motion ``X -> R X + t`` to the box."""
        R = np.asarray(R, dtype=float)
        return OrientedBox3(
            Rotation3.from_matrix(R @ self.R), R @ self.center + np.asarray(t, float), self.size
        )

    def to_local(self, points) -> np.ndarray:
        """World points expressed in the box frame (origin at the center)."""
        return (np.asarray(points, dtype=float) - self.center) @ self.R

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        local = self.to_local(points)
        return np.all(np.abs(local) <= self.size / 2 + tol, axis=-1)

    def __repr__(self):
        return (
            f"OrientedBox3(rotation={self.rotation!r}, center={self.center.tolist()}, "
            f"size={self.size.tolist()})"
        )


def box_vertices(box: OrientedBox3) -> np.ndarray:
    """The 8 corners, shape (8, 3), in bit-encoded sign order."""
    half = VERTEX_SIGNS * (box.size / 2)
    return half @ box.R.T + box.center


@dataclass(frozen=True, eq=False)
class Plane3:
    """Plane ``{X : normal · X + d = 0}``; normal is normalized on construction."""

    normal: np.ndarray
    d: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0.0:
            raise GeometryError("plane normal must be finite and non-zero")
        # Normalizing rescales the offset too so the plane itself is unchanged.
        object.__setattr__(self, "normal", _frozen_array(n / norm, (3,)))
        object.__setattr__(self, "d", float(self.d) / norm)

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal + self.d


def project(cam: CameraIntrinsics, X) -> np.ndarray:
    """Pinhole projection of one point (3,) or many (N, 3) to pixels."""
    X = np.asarray(X, dtype=float)
    z = X[..., 2]
    if np.any(z <= 0):
        raise GeometryError("point behind camera")
    u = cam.fx * X[..., 0] / z + cam.cx
    v = cam.fy * X[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)
