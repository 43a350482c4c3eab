# Exact intersection-over-union of oriented 3D boxes.
#
# The intersection of two boxes is a convex polytope. Its volume comes from the
# hull of the clipped vertices; a Monte-Carlo estimate serves as a cross-check.

import math

import numpy as np

from boxpose import OrientedBox3, Rotation3
from boxpose.metrics import iou2d_projection, iou3d, iou3d_mc
from boxpose.geom import CameraIntrinsics

unit = np.ones(3)
a = OrientedBox3(Rotation3.identity(), [0, 0, 0], unit)

shifted = OrientedBox3(Rotation3.identity(), [0.5, 0, 0], unit)
print("half-shifted cube:", iou3d(a, shifted), "(1/3 exactly)")

turned = OrientedBox3(Rotation3.from_axis_angle([0, 0, 1], math.pi / 4), [0, 0, 0], unit)
print("cube turned 45 deg:", iou3d(a, turned), "vs", math.sqrt(2) / 2)

rng = np.random.default_rng(2)
b = OrientedBox3(Rotation3.random(rng), [0.3, -0.2, 0.1], [1.2, 0.7, 0.9])
print("random pair exact      ", round(iou3d(a, b), 5))
print("random pair Monte-Carlo", round(iou3d_mc(a, b, samples=400_000, seed=0), 5))

# Projected 2D IoU ignores depth: a box and a twice-as-large copy twice as far
# away look identical in the image.
cam = CameraIntrinsics.simple(500.0, 320.0, 240.0)
near = OrientedBox3(Rotation3.identity(), [0, 0, 4], unit)
far = OrientedBox3(Rotation3.identity(), [0, 0, 8], 2 * unit)
print("2D projected IoU", iou2d_projection(near, far, cam), "3D IoU", round(iou3d(near, far), 4))
