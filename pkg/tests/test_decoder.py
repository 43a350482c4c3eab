import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from boxpose.decoder import (
    ALPHA,
    DecoderConfig,
    DegenerateConfigurationError,
    Peak,
    PlaneInconsistentError,
    decode_frame,
    decode_vertices,
    epnp_matrix,
    extract_peaks,
    reprojection_error,
    resolve_scale,
    solve_epnp,
)
from boxpose.geom import (
    VERTEX_SIGNS,
    CameraIntrinsics,
    OrientedBox3,
    Plane3,
    Rotation3,
    box_vertices,
    geodesic_distance,
    project,
)
from boxpose.scenes import boxes_on_plane, ground_plane, random_box_in_view, random_camera
from boxpose.targets import GridSpec, encode_heatmap, encode_targets

GRID = GridSpec()


def box_at_cell(cam, gx, gy, z=3.0, size=(0.4, 0.3, 0.5), rot=None, offset=(0.0, 0.0)):
    u, v = GRID.cell_center(gx, gy) + offset
    center = [(u - cam.cx) / cam.fx * z, (v - cam.cy) / cam.fy * z, z]
    return OrientedBox3(rot or Rotation3.from_axis_angle([1, 2, 3], 0.7), center, size)


# --- peaks ------------------------------------------------------------------

def test_single_gaussian_single_peak(cam):
    box = box_at_cell(cam, 10, 12, offset=(3.0, -2.0))
    heat = encode_heatmap([box], cam)
    peaks = extract_peaks(heat)
    assert len(peaks) == 1
    gy, gx = np.unravel_index(heat.argmax(), heat.shape)
    assert (peaks[0].gx, peaks[0].gy) == (gx, gy)
    assert peaks[0].heat == heat.max()


def test_two_separated_gaussians(cam):
    heat = encode_heatmap([box_at_cell(cam, 8, 10), box_at_cell(cam, 30, 20)], cam)
    peaks = extract_peaks(heat)
    assert {(p.gx, p.gy) for p in peaks} == {(8, 10), (30, 20)}


def test_empty_heatmap_has_no_peaks():
    assert extract_peaks(np.zeros((30, 40))) == []


def test_plateau_yields_one_peak_at_lowest_index():
    heat = np.zeros((30, 40))
    heat[5, 5:7] = 0.9
    heat[6, 5:7] = 0.9
    assert extract_peaks(heat) == [Peak(5, 5, 0.9)]


def test_peak_threshold_and_truncation():
    heat = np.zeros((30, 40))
    for k in range(10):
        heat[2 + 3 * (k % 5), 3 + 10 * (k // 5)] = 0.95 - 0.01 * k
    heat[25, 35] = 0.49
    peaks = extract_peaks(heat, DecoderConfig(max_detections=4))
    assert [p.heat for p in peaks] == pytest.approx([0.95, 0.94, 0.93, 0.92])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (30, 40), elements=st.sampled_from([0.0, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])),
       st.integers(1, 3))
def test_peak_order_and_separation(heat, radius):
    peaks = extract_peaks(heat, DecoderConfig(nms_radius=radius, max_detections=1000))
    heats = [p.heat for p in peaks]
    assert heats == sorted(heats, reverse=True)
    for i, a in enumerate(peaks):
        assert a.heat >= 0.5
        for b in peaks[i + 1 :]:
            assert max(abs(a.gx - b.gx), abs(a.gy - b.gy)) > radius


# --- vertex decoding ----------------------------------------------------------

def test_decode_vertices_round_trip(cam):
    box = box_at_cell(cam, 17, 9, offset=(4.5, 1.25))
    t = encode_targets([box], cam)
    (peak,) = extract_peaks(t.heat)
    assert np.allclose(decode_vertices(peak, t.disp, GRID), project(cam, box_vertices(box)), atol=1e-4)


def test_decode_vertices_zero_field():
    disp = np.zeros((30, 40, 16))
    verts = decode_vertices(Peak(3, 4, 0.9), disp, GRID)
    assert np.array_equal(verts, np.tile([56.0, 72.0], (8, 1)))


def test_decode_from_neighbor_of_true_peak(cam):
    box = box_at_cell(cam, 17, 9, offset=(4.5, 1.25))
    t = encode_targets([box], cam)
    neighbor = Peak(18, 9, float(t.heat[9, 18]))
    assert neighbor.heat > 0.2
    assert np.allclose(decode_vertices(neighbor, t.disp, GRID), project(cam, box_vertices(box)), atol=1e-4)


# --- EPnP -----------------------------------------------------------------------

def test_alpha_rows_sum_to_one_and_rebuild_vertices():
    assert np.allclose(ALPHA.sum(axis=1), 1.0)
    box = OrientedBox3(Rotation3.from_axis_angle([0, 1, 1], 1.1), [0.2, 0.1, 3.0], [0.5, 1.0, 1.5])
    C = np.vstack([box.center, box.center + box.R.T * box.size[:, None]])
    assert np.allclose(ALPHA @ C, box_vertices(box))


def test_true_control_points_are_null_vector(cam, rng):
    for _ in range(20):
        box = random_box_in_view(rng, cam)
        C = np.vstack([box.center, box.center + box.R.T * box.size[:, None]]).reshape(-1)
        M = epnp_matrix(project(cam, box_vertices(box)), cam)
        assert np.linalg.norm(M @ (C / np.linalg.norm(C))) <= 1e-8 * np.linalg.norm(M, 2)


def test_epnp_reference_box(cam):
    box = OrientedBox3(Rotation3.identity(), [0, 0, 2], [1, 1, 1])
    uv = project(cam, box_vertices(box))
    sol = solve_epnp(uv, cam)
    assert reprojection_error(sol, uv, cam).max() <= 1e-6
    axes = sol.axes / np.linalg.norm(sol.axes, axis=1, keepdims=True)
    assert np.allclose(axes @ axes.T, np.eye(3), atol=1e-6)
    assert np.allclose(sol.size_ratios, 1, atol=1e-6)
    assert geodesic_distance(sol.rotation, box.rotation) <= 1e-6
    assert np.allclose(sol.translation_dir, [0, 0, 1])


def test_epnp_scale_ambiguity(cam):
    near = OrientedBox3(Rotation3.identity(), [0, 0, 2], [1, 1, 1])
    far = OrientedBox3(Rotation3.identity(), [0, 0, 4], [2, 2, 2])
    uv_near, uv_far = project(cam, box_vertices(near)), project(cam, box_vertices(far))
    assert np.allclose(uv_near, uv_far, atol=1e-9)
    a, b = solve_epnp(uv_near, cam), solve_epnp(uv_far, cam)
    assert np.allclose(a.vertices_cam, b.vertices_cam, atol=1e-9)
    assert np.allclose(a.size_ratios, b.size_ratios, atol=1e-9)


def test_epnp_random_noiseless(rng):
    for _ in range(200):
        cam = random_camera(rng)
        box = random_box_in_view(rng, cam)
        uv = project(cam, box_vertices(box))
        sol = solve_epnp(uv, cam)
        ratios = box.size / box.size.max()
        assert reprojection_error(sol, uv, cam).max() <= 1e-6
        assert geodesic_distance(sol.rotation, box.rotation) <= 1e-4
        assert np.max(np.abs(sol.size_ratios - ratios) / ratios) <= 1e-5
        assert np.all(sol.vertices_cam[:, 2] > 0)


def test_epnp_solution_scales_to_truth(rng):
    cam = random_camera(rng)
    box = random_box_in_view(rng, cam)
    sol = solve_epnp(project(cam, box_vertices(box)), cam)
    rebuilt = sol.box(box.center[2])
    assert np.allclose(rebuilt.center, box.center, atol=1e-8)
    assert np.allclose(rebuilt.size, box.size, atol=1e-8)


@pytest.mark.parametrize(
    "uv",
    [
        np.tile([320.0, 240.0], (8, 1)),
        np.stack([np.linspace(100, 500, 8), np.linspace(100, 300, 8)], axis=1),
        np.stack([np.array([1, 5, 2, 7, 3, 8, 4, 6]) * 50.0, np.array([1, 5, 2, 7, 3, 8, 4, 6]) * 25.0], axis=1),
    ],
    ids=["coincident", "collinear-affine", "collinear-shuffled"],
)
def test_epnp_degenerate(cam, uv):
    with pytest.raises(DegenerateConfigurationError, match="degenerate configuration"):
        solve_epnp(uv, cam)


def test_epnp_single_solve_under_1ms(cam):
    uv = project(cam, box_vertices(OrientedBox3(Rotation3.from_axis_angle([1, 0, 0], 0.4), [0, 0, 3], [1, 2, 1])))
    solve_epnp(uv, cam)
    times = []
    for _ in range(200):
        t0 = time.perf_counter()
        solve_epnp(uv, cam)
        times.append(time.perf_counter() - t0)
    assert np.median(times) < 1e-3


def test_epnp_time_independent_of_image_size():
    def median_time(width, height):
        cam = CameraIntrinsics.simple(width, width / 2, height / 2, width, height)
        box = OrientedBox3(Rotation3.from_axis_angle([1, 0, 0], 0.4), [0, 0, 3], [1, 2, 1])
        uv = project(cam, box_vertices(box))
        times = []
        for _ in range(200):
            t0 = time.perf_counter()
            solve_epnp(uv, cam)
            times.append(time.perf_counter() - t0)
        return np.median(times)

    small, large = median_time(320, 240), median_time(7680, 4320)
    assert large < 3 * small + 2e-4


# --- metric scale -------------------------------------------------------------

@pytest.fixture
def unit_solution(cam):
    # Normalized to center depth 1: a box of extent 0.8, vertices at y = +-0.4.
    box = OrientedBox3(Rotation3.identity(), [0, 0, 2], [1.6, 1.6, 1.6])
    return solve_epnp(project(cam, box_vertices(box)), cam)


def test_resolve_scale_formula(unit_solution):
    plane = Plane3([0, 1, 0], 0.8)
    assert np.min(unit_solution.vertices_cam @ plane.normal) == pytest.approx(-0.4)
    metric = resolve_scale(unit_solution, plane)
    assert np.allclose(metric.center, [0, 0, 2])
    assert np.allclose(metric.size, [1.6, 1.6, 1.6])


def test_resolve_scale_fixed_point(unit_solution):
    metric = resolve_scale(unit_solution, Plane3([0, 1, 0], 0.4))
    assert np.allclose(metric.center, unit_solution.translation_dir)


def test_resolve_scale_rejects_inconsistent_plane(unit_solution):
    with pytest.raises(PlaneInconsistentError, match="plane inconsistent with detection"):
        resolve_scale(unit_solution, Plane3([0, 1, 0], -0.8))
    with pytest.raises(PlaneInconsistentError):
        resolve_scale(unit_solution, Plane3([1, 0, 0], 0.0))


def test_resolve_scale_on_ground_plane_scene(rng, cam):
    plane, basis = ground_plane(rng)
    (box,) = boxes_on_plane(rng, cam, plane, basis, 1)
    sol = solve_epnp(project(cam, box_vertices(box)), cam)
    metric = resolve_scale(sol, plane)
    assert np.allclose(metric.center, box.center, atol=1e-6)
    assert np.allclose(metric.size, box.size, atol=1e-6)


# --- frame decoding -------------------------------------------------------------

def test_decode_frame_single_object(cam):
    box = box_at_cell(cam, 20, 15, offset=(2.0, 5.0))
    t = encode_targets([box], cam)
    results = decode_frame(t.heat, t.disp, cam)
    assert len(results) == 1
    assert geodesic_distance(results[0].solution.rotation, box.rotation) <= 1e-4
    assert results[0].metric_box is None


def test_decode_frame_two_objects_with_plane(rng, cam):
    plane, basis = ground_plane(rng)
    boxes = boxes_on_plane(rng, cam, plane, basis, 2)
    assert len(boxes) == 2
    t = encode_targets(boxes, cam)
    results = decode_frame(t.heat, t.disp, cam, plane=plane)
    assert len(results) == 2
    for r in results:
        gt = min(boxes, key=lambda b: np.linalg.norm(b.center - r.metric_box.center))
        assert geodesic_distance(r.solution.rotation, gt.rotation) <= 1e-4
        assert np.allclose(r.metric_box.center, gt.center, atol=1e-6)


def test_decode_frame_empty(cam):
    assert decode_frame(np.zeros((30, 40)), np.zeros((30, 40, 16)), cam) == []


def test_decode_frame_shape_mismatch(cam):
    with pytest.raises(ValueError):
        decode_frame(np.zeros((30, 40)), np.zeros((30, 40, 8)), cam)


def test_decode_frame_drops_degenerate_peaks(cam, caplog):
    heat = np.zeros((30, 40))
    heat[10, 10] = 1.0
    assert decode_frame(heat, np.zeros((30, 40, 16)), cam) == []
    assert "degenerate" in caplog.text
