"""Oriented-box IoU (exact, Monte-Carlo, projected 2D), average precision, REP and ADD."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geom import BOX_EDGES, CameraIntrinsics, OrientedBox3, box_vertices, project

TOL = 1e-9


# --- exact 3D IoU -----------------------------------------------------------

def _edge_face_hits(edges_local: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Points where segments (N, 2, 3), given in a box's local frame, cross its faces."""
    p0, p1 = edges_local[:, 0], edges_local[:, 1]
    d = p1 - p0
    hits = []
    for k in range(3):
        moving = np.abs(d[:, k]) > TOL
        for side in (-half[k], half[k]):
            t = np.full(len(d), np.nan)
            t[moving] = (side - p0[moving, k]) / d[moving, k]
            ok = (t >= -TOL) & (t <= 1 + TOL)
            pts = p0[ok] + np.clip(t[ok], 0.0, 1.0)[:, None] * d[ok]
            pts[:, k] = side
            others = [a for a in range(3) if a != k]
            inside = np.all(np.abs(pts[:, others]) <= half[others] + TOL, axis=1)
            hits.append(pts[inside])
    return np.concatenate(hits)


def intersection_points(a: OrientedBox3, b: OrientedBox3) -> np.ndarray:
    """Vertices of the intersection polytope (with duplicates), world frame."""
    va, vb = box_vertices(a), box_vertices(b)
    edges = np.array(BOX_EDGES)
    parts = [va[b.contains(va, TOL)], vb[a.contains(vb, TOL)]]
    for box, other_verts in ((b, va), (a, vb)):
        local = box.to_local(other_verts)
        hits = _edge_face_hits(local[edges], box.size / 2)
        parts.append(hits @ box.R.T + box.center)
    return np.concatenate(parts)


def convex_hull_volume(points) -> float:
    """Volume of the convex hull; 0 when the points span less than 3 dimensions."""
    points = np.asarray(points, dtype=float)
    if len(points) < 4:
        return 0.0
    centroid = points.mean(axis=0)
    centered = points - centroid
    scale = np.abs(centered).max()
    if scale == 0 or np.linalg.matrix_rank(centered / scale, tol=1e-9) < 3:
        return 0.0
    try:
        hull = ConvexHull(points)
    except QhullError:
        return 0.0
    # Signed tetrahedra from the centroid over the triangulated facets.
    tri = centered[hull.simplices]
    return float(np.abs(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))).sum() / 6.0)


def intersection_volume(a: OrientedBox3, b: OrientedBox3) -> float:
    return convex_hull_volume(intersection_points(a, b))


def iou3d(a: OrientedBox3, b: OrientedBox3) -> float:
    """Exact IoU of two oriented boxes via the convex hull of their intersection."""
    inter = intersection_volume(a, b)
    union = a.volume + b.volume - inter
    return float(np.clip(inter / union, 0.0, 1.0))


def iou3d_mc(a: OrientedBox3, b: OrientedBox3, samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo IoU estimate from uniform samples inside ``a``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    hits = 0
    chunk = 200_000
    for start in range(0, samples, chunk):
        n = min(chunk, samples - start)
        local = (rng.random((n, 3)) - 0.5) * a.size
        hits += int(np.count_nonzero(b.contains(local @ a.R.T + a.center, 0.0)))
    inter = a.volume * hits / samples
    return float(inter / (a.volume + b.volume - inter))


# --- projected 2D IoU -------------------------------------------------------

def convex_hull_2d(points) -> np.ndarray:
    """Counter-clockwise hull (monotone chain), collinear points dropped."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def clip_polygon(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman: ``subject`` clipped by the convex CCW polygon ``clip``."""
    output = [tuple(p) for p in np.asarray(subject, dtype=float)]
    clip = np.asarray(clip, dtype=float)
    for a, b in zip(clip, np.roll(clip, -1, axis=0)):
        if not output:
            break
        edge = b - a

        def side(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])

        inputs, output = output, []
        prev = inputs[-1]
        for cur in inputs:
            s_cur, s_prev = side(cur), side(prev)
            if s_cur >= 0:
                if s_prev < 0:
                    output.append(_segment_cross(prev, cur, s_prev, s_cur))
                output.append(cur)
            elif s_prev >= 0:
                output.append(_segment_cross(prev, cur, s_prev, s_cur))
            prev = cur
    return np.array(output).reshape(-1, 2)


def _segment_cross(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def iou2d_projection(a: OrientedBox3, b: OrientedBox3, cam: CameraIntrinsics) -> float:
    """IoU of the convex hulls of the two boxes' projected vertices."""
    ha = convex_hull_2d(project(cam, box_vertices(a)))
    hb = convex_hull_2d(project(cam, box_vertices(b)))
    inter = polygon_area(clip_polygon(ha, hb))
    union = polygon_area(ha) + polygon_area(hb) - inter
    if union <= 0:
        return 0.0
    return float(np.clip(inter / union, 0.0, 1.0))


# --- average precision -------------------------------------------------------

class MatchedDetection(NamedTuple):
    detection: int
    gt: int | None
    iou: float
    confidence: float


@dataclass
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    ap: float
    matches: list[MatchedDetection] = field(default_factory=list)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def match_detections(detections, gts, iou_threshold: float = 0.5, iou_fn=iou3d):
    """Greedy matching in descending confidence against same-frame, unmatched GTs."""
    confidences = np.array([float(c) for _, c, _ in detections])
    if not np.all(np.isfinite(confidences)):
        raise ValueError("detection confidences must be finite")
    gts_by_frame: dict = {}
    for g, (frame, box) in enumerate(gts):
        gts_by_frame.setdefault(frame, []).append((g, box))

    taken: set[int] = set()
    matches = []
    for d in np.argsort(-confidences, kind="stable"):
        frame, conf, box = detections[d]
        best_g, best_iou = None, 0.0
        for g, gt_box in gts_by_frame.get(frame, []):
            if g in taken:
                continue
            iou = iou_fn(box, gt_box)
            if best_g is None or iou > best_iou:
                best_g, best_iou = g, iou
        if best_g is not None and best_iou >= iou_threshold:
            taken.add(best_g)
            matches.append(MatchedDetection(int(d), best_g, best_iou, float(conf)))
        else:
            matches.append(MatchedDetection(int(d), None, best_iou, float(conf)))
    return matches


def ap_from_matches(matches: Sequence[MatchedDetection], num_gts: int) -> PRCurve:
    """All-point interpolated AP from matches already sorted by confidence."""
    if num_gts <= 0:
        raise ValueError("undefined recall: no ground truth")
    tp = np.cumsum([m.gt is not None for m in matches], dtype=float)
    fp = np.cumsum([m.gt is None for m in matches], dtype=float)
    recall = tp / num_gts
    precision = tp / np.maximum(tp + fp, 1.0)
    envelope = np.maximum.accumulate(precision[::-1])[::-1] if len(precision) else precision
    steps = np.diff(np.concatenate([[0.0], recall]))
    ap = float(np.sum(steps * envelope))
    return PRCurve(recall, precision, ap, list(matches))


def average_precision(detections, gts, iou_threshold: float = 0.5, iou_fn=iou3d) -> PRCurve:
    """AP over ``detections = [(frame, confidence, box)]`` and ``gts = [(frame, box)]``."""
    if len(gts) == 0:
        raise ValueError("undefined recall: no ground truth")
    return ap_from_matches(match_detections(detections, gts, iou_threshold, iou_fn), len(gts))


# --- pose metrics -------------------------------------------------------------

class PoseScore(NamedTuple):
    success: bool
    error: float


def _apply(pose, points):
    R, t = pose
    if hasattr(R, "matrix"):
        R = R.matrix()
    return np.asarray(points, float) @ np.asarray(R, float).T + np.asarray(t, float)


def rep_metric(est, gt, points, cam: CameraIntrinsics, threshold_px: float = 5.0) -> PoseScore:
    """Mean 2D reprojection distance of model points under two ``(R, t)`` poses."""
    if len(points) == 0:
        raise ValueError("points must be non-empty")
    err = np.linalg.norm(project(cam, _apply(est, points)) - project(cam, _apply(gt, points)), axis=1)
    mean = float(err.mean())
    return PoseScore(bool(mean < threshold_px), mean)


def add_metric(est, gt, points, diameter: float, symmetric: bool = False, fraction: float = 0.1) -> PoseScore:
    """ADD (or ADD-S when ``symmetric``) against ``fraction * diameter``."""
    if len(points) == 0:
        raise ValueError("points must be non-empty")
    if diameter <= 0:
        raise ValueError("diameter must be positive")
    pe, pg = _apply(est, points), _apply(gt, points)
    if symmetric:
        d = np.linalg.norm(pe[:, None, :] - pg[None, :, :], axis=2).min(axis=1)
    else:
        d = np.linalg.norm(pe - pg, axis=1)
    mean = float(d.mean())
    return PoseScore(bool(mean < fraction * diameter), mean)
