# Average precision over 3D IoU, plus the REP and ADD pose scores.

import numpy as np

from boxpose import OrientedBox3, Rotation3
from boxpose.geom import CameraIntrinsics, box_vertices
from boxpose.metrics import add_metric, average_precision, rep_metric


def cube(center):
    return OrientedBox3(Rotation3.identity(), center, np.ones(3))


gts = [(0, cube((0, 0, 5))), (1, cube((1, 1, 6)))]

# Detections are (frame, confidence, box). The false positive is ranked first.
dets = [
    (0, 0.9, cube((3, 0, 5))),
    (0, 0.8, cube((0.25, 0, 5))),
    (1, 0.4, cube((1, 1.1, 6))),
]
curve = average_precision(dets, gts, iou_threshold=0.5)
print("AP@0.5 =", curve.ap)
for m in curve.matches:
    print("  conf", m.confidence, "gt", m.gt, "iou", round(m.iou, 3))
print("PR points", curve.points)

cam = CameraIntrinsics.simple(500.0, 320.0, 240.0)
pts = box_vertices(OrientedBox3(Rotation3.identity(), [0, 0, 0], [0.2, 0.2, 0.2]))
gt_pose = (Rotation3.identity(), np.array([0.0, 0.0, 2.0]))
est_pose = (Rotation3.from_axis_angle([0, 1, 0], 0.02), np.array([0.01, 0.0, 2.0]))
print("REP-5px", rep_metric(est_pose, gt_pose, pts, cam))
print("ADD-0.1d", add_metric(est_pose, gt_pose, pts, diameter=np.sqrt(3) * 0.2))
