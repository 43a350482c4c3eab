"""On-disk formats: ``.mpt`` tensors, the JSON dataset manifest, PNG rasters.

Tensor file layout (all little-endian)::

    b"MPT1" | rank: u32 | dims[rank]: u32 | payload: f32[prod(dims)], row-major
"""

from __future__ import annotations

import copy
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .geom import CameraIntrinsics, GeometryError, OrientedBox3, Plane3, Rotation3

MAGIC = b"MPT1"
MAX_RANK = 4
MANIFEST_VERSION = 1
QUAT_TOL = 1e-6
LABEL_KEYS = ("pose", "segmentation", "coordinate_map")


class TensorFormatError(ValueError):
    """Base class for malformed tensor files."""


class MalformedHeaderError(TensorFormatError):
    def __init__(self, detail: str):
        super().__init__(f"malformed header: {detail}")


class LengthMismatchError(TensorFormatError):
    def __init__(self, detail: str):
        super().__init__(f"length mismatch: {detail}")


class ManifestError(ValueError):
    """Schema violation; the message names the offending field."""


# --- tensors ---------------------------------------------------------------

def encode_tensor(dims, values) -> bytes:
    dims = [int(d) for d in dims]
    if not 1 <= len(dims) <= MAX_RANK:
        raise ValueError(f"rank must be in [1, {MAX_RANK}], got {len(dims)}")
    if any(d < 0 or d >= 2**32 for d in dims):
        raise ValueError(f"dims must fit in u32, got {dims}")
    arr = np.asarray(values, dtype="<f4")
    if arr.size != math.prod(dims):
        raise ValueError(f"{arr.size} values do not fill dims {dims}")
    header = MAGIC + struct.pack(f"<I{len(dims)}I", len(dims), *dims)
    return header + arr.reshape(-1).tobytes()


def decode_tensor(data: bytes) -> tuple[list[int], np.ndarray]:
    if len(data) < 8 or data[:4] != MAGIC:
        raise MalformedHeaderError(f"bad magic {data[:4]!r}")
    (rank,) = struct.unpack_from("<I", data, 4)
    if not 1 <= rank <= MAX_RANK:
        raise MalformedHeaderError(f"rank {rank} outside [1, {MAX_RANK}]")
    offset = 8 + 4 * rank
    if len(data) < offset:
        raise MalformedHeaderError("truncated dims")
    dims = list(struct.unpack_from(f"<{rank}I", data, 8))
    expected = 4 * math.prod(dims)
    if len(data) - offset != expected:
        raise LengthMismatchError(f"payload has {len(data) - offset} bytes, dims {dims} need {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims)
    return dims, values


def write_tensor(path, dims, values):
    Path(path).write_bytes(encode_tensor(dims, values))


def read_tensor(path) -> tuple[list[int], np.ndarray]:
    """Return ``(dims, values)``; values is a float32 array shaped ``dims``."""
    return decode_tensor(Path(path).read_bytes())


def save_array(path, arr):
    arr = np.asarray(arr)
    write_tensor(path, arr.shape, arr)


def load_array(path) -> np.ndarray:
    return read_tensor(path)[1]


# --- manifest --------------------------------------------------------------

_OBJECT_KEYS = {"rotation", "center", "size"}
_FRAME_KEYS = {"image", "mask", "plane", "objects", "labels"}
_MANIFEST_KEYS = {"version", "camera", "frames"}
_CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


@dataclass
class ObjectLabel:
    rotation: tuple[float, float, float, float]
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_box(cls, box: OrientedBox3) -> ObjectLabel:
        return cls(box.rotation.as_quat(), tuple(box.center.tolist()), tuple(box.size.tolist()))

    def box(self) -> OrientedBox3:
        return OrientedBox3(Rotation3.from_quat(self.rotation), self.center, self.size)


@dataclass
class Frame:
    image: str
    objects: list[ObjectLabel] = field(default_factory=list)
    mask: str | None = None
    plane: tuple[tuple[float, float, float], float] | None = None
    labels: dict[str, bool] = field(default_factory=lambda: dict.fromkeys(LABEL_KEYS, False))
    extra: dict[str, Any] = field(default_factory=dict)

    def boxes(self) -> list[OrientedBox3]:
        return [o.box() for o in self.objects]

    def plane3(self) -> Plane3 | None:
        return None if self.plane is None else Plane3(self.plane[0], self.plane[1])

    @property
    def stem(self) -> str:
        return Path(self.image).stem


@dataclass
class Manifest:
    camera: CameraIntrinsics
    frames: list[Frame] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    extra: dict[str, Any] = field(default_factory=dict)
    root: Path | None = None
    camera_raw: dict[str, Any] | None = field(default=None, repr=False)

    def resolve(self, rel: str) -> Path:
        """A manifest-relative path made absolute (relative to cwd if unsaved)."""
        return (self.root or Path(".")) / rel


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ManifestError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _vec(value, n: int, where: str) -> tuple:
    if not isinstance(value, list) or len(value) != n:
        raise ManifestError(f"{where}: expected a list of {n} numbers, got {value!r}")
    for i, v in enumerate(value):
        _num(v, f"{where}[{i}]")
    # Raw JSON numbers are kept so int/float spelling survives a round trip.
    return tuple(value)


def _parse_object(raw, where: str) -> ObjectLabel:
    if not isinstance(raw, dict):
        raise ManifestError(f"{where}: expected an object")
    for key in sorted(_OBJECT_KEYS):
        if key not in raw:
            raise ManifestError(f"{where}.{key}: required")
    q = _vec(raw["rotation"], 4, f"{where}.rotation")
    norm = math.sqrt(sum(c * c for c in q))
    if abs(norm - 1.0) > QUAT_TOL:
        raise ManifestError(f"{where}.rotation: quaternion norm {norm:.6g} is not 1 (tolerance {QUAT_TOL})")
    size = _vec(raw["size"], 3, f"{where}.size")
    if any(s <= 0 for s in size):
        raise ManifestError(f"{where}.size: extents must be positive, got {list(size)}")
    center = _vec(raw["center"], 3, f"{where}.center")
    extra = {k: v for k, v in raw.items() if k not in _OBJECT_KEYS}
    return ObjectLabel(q, center, size, extra)


def _parse_frame(raw, where: str) -> Frame:
    if not isinstance(raw, dict):
        raise ManifestError(f"{where}: expected an object")
    image = raw.get("image")
    if not isinstance(image, str) or not image:
        raise ManifestError(f"{where}.image: required path string")
    mask = raw.get("mask")
    if mask is not None and not isinstance(mask, str):
        raise ManifestError(f"{where}.mask: expected a path string")
    plane = None
    if raw.get("plane") is not None:
        p = raw["plane"]
        if not isinstance(p, dict) or "normal" not in p or "d" not in p:
            raise ManifestError(f"{where}.plane: expected {{normal, d}}")
        normal = _vec(p["normal"], 3, f"{where}.plane.normal")
        if abs(math.sqrt(sum(c * c for c in normal)) - 1.0) > QUAT_TOL:
            raise ManifestError(f"{where}.plane.normal: must be a unit vector")
        _num(p["d"], f"{where}.plane.d")
        plane = (normal, p["d"])
    objects_raw = raw.get("objects", [])
    if not isinstance(objects_raw, list):
        raise ManifestError(f"{where}.objects: expected a list")
    objects = [_parse_object(o, f"{where}.objects[{k}]") for k, o in enumerate(objects_raw)]
    labels_raw = raw.get("labels", {})
    if not isinstance(labels_raw, dict):
        raise ManifestError(f"{where}.labels: expected an object")
    labels = {}
    for key in LABEL_KEYS:
        value = labels_raw.get(key, False)
        if not isinstance(value, bool):
            raise ManifestError(f"{where}.labels.{key}: expected true/false")
        labels[key] = value
    for key, value in labels_raw.items():
        if key not in labels:
            labels[key] = value
    extra = {k: v for k, v in raw.items() if k not in _FRAME_KEYS}
    return Frame(image, objects, mask, plane, labels, extra)


def _parse_camera(raw) -> CameraIntrinsics:
    if not isinstance(raw, dict):
        raise ManifestError("camera required")
    for key in _CAMERA_KEYS:
        if key not in raw:
            raise ManifestError(f"camera.{key}: required")
    vals = {k: _num(raw[k], f"camera.{k}") for k in _CAMERA_KEYS}
    for k in ("width", "height"):
        if not vals[k].is_integer():
            raise ManifestError(f"camera.{k}: expected an integer")
    try:
        return CameraIntrinsics(
            vals["fx"], vals["fy"], vals["cx"], vals["cy"], int(vals["width"]), int(vals["height"])
        )
    except GeometryError as exc:
        raise ManifestError(f"camera: {exc}") from None


def manifest_from_dict(doc) -> Manifest:
    if not isinstance(doc, dict):
        raise ManifestError("manifest: expected a JSON object")
    if "camera" not in doc:
        raise ManifestError("camera required")
    version = doc.get("version")
    if version != MANIFEST_VERSION:
        raise ManifestError(f"version: expected {MANIFEST_VERSION}, got {version!r}")
    camera = _parse_camera(doc["camera"])
    frames_raw = doc.get("frames")
    if not isinstance(frames_raw, list):
        raise ManifestError("frames: expected a list")
    frames = [_parse_frame(f, f"frames[{i}]") for i, f in enumerate(frames_raw)]
    extra = {k: v for k, v in doc.items() if k not in _MANIFEST_KEYS}
    return Manifest(camera, frames, version, extra, camera_raw=copy.deepcopy(doc["camera"]))


def _camera_dict(manifest: Manifest) -> dict:
    cam = manifest.camera
    raw = manifest.camera_raw
    if raw is not None and all(float(raw[k]) == float(getattr(cam, k)) for k in _CAMERA_KEYS):
        return copy.deepcopy(raw)
    out = {k: getattr(cam, k) for k in _CAMERA_KEYS}
    if raw is not None:
        out.update({k: v for k, v in copy.deepcopy(raw).items() if k not in _CAMERA_KEYS})
    return out


def manifest_to_dict(manifest: Manifest) -> dict:
    extra = copy.deepcopy(manifest.extra)
    camera = _camera_dict(manifest)
    frames = []
    for frame in manifest.frames:
        out = dict(copy.deepcopy(frame.extra))
        out["image"] = frame.image
        if frame.mask is not None:
            out["mask"] = frame.mask
        if frame.plane is not None:
            out["plane"] = {"normal": list(frame.plane[0]), "d": frame.plane[1]}
        out["labels"] = dict(frame.labels)
        out["objects"] = [
            {**copy.deepcopy(o.extra), "rotation": list(o.rotation), "center": list(o.center), "size": list(o.size)}
            for o in frame.objects
        ]
        frames.append(out)
    return {**extra, "version": manifest.version, "camera": camera, "frames": frames}


def dumps_manifest(manifest: Manifest) -> str:
    return json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=True) + "\n"


def read_manifest(path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    manifest = manifest_from_dict(doc)
    manifest.root = path.parent
    return manifest


def write_manifest(path, manifest: Manifest):
    Path(path).write_text(dumps_manifest(manifest))


# --- PNG -------------------------------------------------------------------

def read_png(path, mode: str) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert(mode)).copy()


def write_png(path, arr):
    from PIL import Image

    arr = np.asarray(arr)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    Image.fromarray(arr).save(path, format="PNG")
