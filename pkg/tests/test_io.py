import json
import struct

import numpy as np
import pytest

from boxpose import io
from boxpose.targets import encode_heatmap


def test_layout_example_bytes(tmp_path, fixtures):
    path = tmp_path / "t.mpt"
    io.write_tensor(path, [1, 2, 1], [1.0, -2.5])
    assert path.read_bytes() == (fixtures / "layout_example.mpt").read_bytes()
    assert path.read_bytes().hex(" ").upper() == (
        "4D 50 54 31 03 00 00 00 01 00 00 00 02 00 00 00 01 00 00 00 00 00 80 3F 00 00 20 C0"
    )
    dims, values = io.read_tensor(fixtures / "layout_example.mpt")
    assert dims == [1, 2, 1] and values.reshape(-1).tolist() == [1.0, -2.5]


def test_displacement_field_round_trip(tmp_path):
    field = np.random.default_rng(0).normal(size=(30, 40, 16)).astype(np.float32)
    io.save_array(tmp_path / "d.mpt", field)
    back = io.load_array(tmp_path / "d.mpt")
    assert back.dtype == np.dtype("<f4") and back.tobytes() == field.tobytes()


def test_golden_heat_round_trip(tmp_path, fixtures):
    golden = (fixtures / "heat_golden.mpt").read_bytes()
    dims, values = io.decode_tensor(golden)
    assert dims == [30, 40, 1]
    assert io.encode_tensor(dims, values) == golden


def test_golden_heat_matches_encoder(fixtures):
    m = io.read_manifest(fixtures / "manifest_minimal.json")
    heat = encode_heatmap(m.frames[0].boxes(), m.camera).astype(np.float32)
    assert heat[..., None].tobytes() == io.load_array(fixtures / "heat_golden.mpt").tobytes()


def test_bad_magic(tmp_path):
    data = bytearray((b"XXXX") + struct.pack("<II", 1, 1) + struct.pack("<f", 1.0))
    with pytest.raises(io.MalformedHeaderError, match="malformed header"):
        io.decode_tensor(bytes(data))


@pytest.mark.parametrize("rank", [0, 5])
def test_bad_rank(rank):
    with pytest.raises(io.MalformedHeaderError):
        io.decode_tensor(io.MAGIC + struct.pack("<I", rank))


def test_truncated_payload(fixtures):
    data = (fixtures / "layout_example.mpt").read_bytes()
    with pytest.raises(io.LengthMismatchError, match="length mismatch"):
        io.decode_tensor(data[:-1])
    with pytest.raises(io.LengthMismatchError):
        io.decode_tensor(data + b"\0\0\0\0")


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        io.read_tensor(tmp_path / "nope.mpt")


def test_write_rejects_inconsistent_dims(tmp_path):
    with pytest.raises(ValueError):
        io.write_tensor(tmp_path / "x.mpt", [2, 2], [1.0, 2.0, 3.0])


# --- manifest -----------------------------------------------------------------

def test_minimal_manifest_round_trips_bytes(tmp_path, fixtures):
    src = fixtures / "manifest_minimal.json"
    m = io.read_manifest(src)
    assert m.camera.fx == 500 and len(m.frames[0].objects) == 1
    io.write_manifest(tmp_path / "m.json", m)
    assert (tmp_path / "m.json").read_bytes() == src.read_bytes()


def test_unknown_fields_preserved(tmp_path, fixtures):
    doc = json.loads((fixtures / "manifest_minimal.json").read_text())
    doc["producer"] = {"tool": "x"}
    doc["camera"]["model"] = "pinhole"
    doc["frames"][0]["timestamp"] = 12.5
    doc["frames"][0]["objects"][0]["category"] = "shoe"
    doc["frames"][0]["labels"]["depth"] = True
    m = io.manifest_from_dict(doc)
    assert json.loads(io.dumps_manifest(m)) == doc


def test_write_is_deterministic(fixtures):
    m = io.read_manifest(fixtures / "manifest_minimal.json")
    assert io.dumps_manifest(m) == io.dumps_manifest(io.manifest_from_dict(json.loads(io.dumps_manifest(m))))


def _doc(fixtures):
    return json.loads((fixtures / "manifest_minimal.json").read_text())


def test_bad_quaternion_named(fixtures):
    doc = _doc(fixtures)
    doc["frames"][0]["objects"][0]["rotation"] = [0.9, 0.0, 0.0, 0.0]
    with pytest.raises(io.ManifestError, match=r"frames\[0\]\.objects\[0\]\.rotation"):
        io.manifest_from_dict(doc)


def test_missing_camera(fixtures):
    doc = _doc(fixtures)
    del doc["camera"]
    with pytest.raises(io.ManifestError, match="camera required"):
        io.manifest_from_dict(doc)


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["frames"][0]["objects"][0].__setitem__("size", [1, -1, 1]), r"frames\[0\]\.objects\[0\]\.size"),
        (lambda d: d["frames"][0]["objects"][0].pop("center"), r"frames\[0\]\.objects\[0\]\.center"),
        (lambda d: d["frames"][0].pop("image"), r"frames\[0\]\.image"),
        (lambda d: d["frames"][0]["labels"].__setitem__("pose", "yes"), r"frames\[0\]\.labels\.pose"),
        (lambda d: d["frames"][0]["plane"].__setitem__("normal", [0, 2, 0]), r"frames\[0\]\.plane\.normal"),
        (lambda d: d["camera"].pop("fx"), r"camera\.fx"),
        (lambda d: d.__setitem__("version", 7), "version"),
    ],
)
def test_schema_errors_are_located(fixtures, mutate, field):
    doc = _doc(fixtures)
    mutate(doc)
    with pytest.raises(io.ManifestError, match=field):
        io.manifest_from_dict(doc)


def test_invalid_json(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    with pytest.raises(io.ManifestError):
        io.read_manifest(tmp_path / "m.json")


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    io.write_png(tmp_path / "a.png", img)
    assert np.array_equal(io.read_png(tmp_path / "a.png", "RGB"), img)
    mask = img[..., 0] > 128
    io.write_png(tmp_path / "m.png", mask)
    assert set(np.unique(io.read_png(tmp_path / "m.png", "L"))) <= {0, 255}
