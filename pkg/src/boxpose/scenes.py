"""Random synthetic scenes with known ground truth (boxes resting on a ground plane)."""

from __future__ import annotations

import numpy as np

from .geom import CameraIntrinsics, OrientedBox3, Plane3, Rotation3, box_vertices, project
from .targets import EncoderConfig, GridSpec, _object_kernels


def random_camera(rng, width: int = 640, height: int = 480) -> CameraIntrinsics:
    f = rng.uniform(400.0, 1200.0)
    return CameraIntrinsics(
        f,
        f * rng.uniform(0.95, 1.05),
        width / 2 + rng.uniform(-20, 20),
        height / 2 + rng.uniform(-20, 20),
        width,
        height,
    )


def random_box_in_view(rng, cam: CameraIntrinsics, min_extent_px: float = 0.0, max_tries: int = 1000):
    """A random box fully in front of the camera whose vertices all project inside the image.

    ``min_extent_px`` bounds the larger side of the projected 2D bounding rectangle from below.
    """
    for _ in range(max_tries):
        size = rng.uniform(0.2, 2.0, 3)
        depth = rng.uniform(2.0, 8.0) * size.max()
        uv = np.array([rng.uniform(0.2, 0.8) * cam.width, rng.uniform(0.2, 0.8) * cam.height])
        center = depth * np.array([(uv[0] - cam.cx) / cam.fx, (uv[1] - cam.cy) / cam.fy, 1.0])
        box = OrientedBox3(Rotation3.random(rng), center, size)
        verts = box_vertices(box)
        if np.any(verts[:, 2] <= 0.1 * depth):
            continue
        px = project(cam, verts)
        if not all(cam.contains(p) for p in px):
            continue
        if (px.max(axis=0) - px.min(axis=0)).max() < min_extent_px:
            continue
        return box
    raise RuntimeError("could not place a box in view")


def ground_plane(rng, height_range=(1.0, 1.8), max_tilt_deg: float = 35.0) -> tuple[Plane3, np.ndarray]:
    """Floor plane below a camera pitched down; returns the plane and its basis (x, up, z).

    Camera y points down, so "up" starts as -y and is pitched about x.
    """
    pitch = np.radians(rng.uniform(10.0, max_tilt_deg))
    Rx = Rotation3.from_axis_angle([1, 0, 0], pitch).matrix()
    up = Rx @ np.array([0.0, -1.0, 0.0])
    forward = Rx @ np.array([0.0, 0.0, 1.0])
    right = np.cross(up, forward)
    h = rng.uniform(*height_range)
    return Plane3(up, h), np.stack([right, up, forward])


def boxes_on_plane(
    rng,
    cam: CameraIntrinsics,
    plane: Plane3,
    basis: np.ndarray,
    count: int,
    grid: GridSpec | None = None,
    cfg: EncoderConfig | None = None,
    separation_sigmas: float = 4.0,
    max_tries: int = 2000,
) -> list[OrientedBox3]:
    """Up to ``count`` boxes resting on ``plane``, fully in view and well separated on the grid.

    Separation: projected centers at least ``separation_sigmas * (sigma_a +
    sigma_b) + 1`` cells apart, so each object owns its own heat peak.
    """
    grid = grid or GridSpec.for_camera(cam)
    cfg = cfg or EncoderConfig()
    right, up, forward = basis
    foot_origin = -plane.d * plane.normal
    boxes, kernels = [], []
    for _ in range(max_tries):
        if len(boxes) == count:
            break
        size = np.array([rng.uniform(0.15, 0.6), rng.uniform(0.1, 0.4), rng.uniform(0.15, 0.6)])
        foot = foot_origin + rng.uniform(-1.5, 1.5) * right + rng.uniform(2.0, 6.0) * forward
        yaw = rng.uniform(-np.pi, np.pi)
        Ryaw = Rotation3.from_axis_angle(up, yaw).matrix()
        # Box y axis along the plane normal so its bottom face lies on the plane.
        R = Ryaw @ np.stack([right, up, forward], axis=1)
        box = OrientedBox3(Rotation3.from_matrix(R), foot + up * size[1] / 2, size)
        verts = box_vertices(box)
        if np.any(verts[:, 2] <= 0.2):
            continue
        px = project(cam, verts)
        if not all(cam.contains(p) for p in px):
            continue
        (kern,) = _object_kernels([box], cam, grid, cfg)
        _, mu, sigma, _ = kern
        if any(
            np.linalg.norm(mu - mu2) < separation_sigmas * (sigma + sigma2) + 1.0
            for _, mu2, sigma2, _ in kernels
        ):
            continue
        boxes.append(box)
        kernels.append(kern)
    return boxes


def ground_plane_manifest(seed: int, n_frames: int, cam: CameraIntrinsics | None = None, max_objects: int = 3):
    """A manifest of ``n_frames`` frames with 1..max_objects boxes on a per-frame floor plane."""
    from .io import Frame, Manifest, ObjectLabel

    cam = cam or CameraIntrinsics.simple(500.0, 320.0, 240.0)
    rng = np.random.default_rng(seed)
    frames = []
    while len(frames) < n_frames:
        plane, basis = ground_plane(rng)
        want = int(rng.integers(1, max_objects + 1))
        boxes = boxes_on_plane(rng, cam, plane, basis, want)
        if len(boxes) != want:
            continue
        frames.append(
            Frame(
                image=f"frame_{len(frames):05d}.png",
                objects=[ObjectLabel.from_box(b) for b in boxes],
                plane=(tuple(plane.normal.tolist()), plane.d),
                labels={"pose": True, "segmentation": False, "coordinate_map": False},
            )
        )
    return Manifest(cam, frames)
