# Encoding ground-truth boxes into heatmap/displacement targets and decoding them back.
#
# A camera looks down at a floor with a few boxes on it. We turn the boxes into
# the two grid tensors a detector would be trained on, then run the decoder on
# those tensors as if they were network outputs.

import numpy as np

from boxpose import CameraIntrinsics, decode_frame, encode_targets
from boxpose.metrics import iou3d
from boxpose.scenes import boxes_on_plane, ground_plane

rng = np.random.default_rng(0)
cam = CameraIntrinsics.simple(500.0, 320.0, 240.0)

plane, basis = ground_plane(rng)
boxes = boxes_on_plane(rng, cam, plane, basis, 3)
print("boxes placed:", len(boxes))

# The heatmap is a 30x40 grid (one cell per 16 px). Each object contributes a
# Gaussian bump centred on its projected center.
targets = encode_targets(boxes, cam)
print("heatmap shape", targets.heat.shape, "max", targets.heat.max().round(4))
print("cells above 0.5:", int((targets.heat > 0.5).sum()))

# The displacement field stores, per cell, the offsets to the 8 projected vertices.
print("displacement shape", targets.disp.shape)

# Decoding: peaks -> vertices -> EPnP -> metric scale from the floor plane.
results = decode_frame(targets.heat, targets.disp, cam, plane=plane)
for r in results:
    best = max(iou3d(r.metric_box, b) for b in boxes)
    print(f"peak {r.detection.peak.gx, r.detection.peak.gy} heat {r.detection.confidence:.3f} best IoU {best:.6f}")
