"""Non-neural core of a single-shot box-vertex 6DoF pose pipeline.

Target encoding for heatmap/displacement heads, peak + EPnP decoding with
plane-based metric scale, exact oriented-box IoU and detection/pose metrics,
and a 2D alpha compositor for synthetic segmentation data.
"""

from .decoder import (
    DecoderConfig,
    DegenerateConfigurationError,
    Detection,
    EpnpSolution,
    Peak,
    PlaneInconsistentError,
    decode_frame,
    decode_vertices,
    extract_peaks,
    resolve_scale,
    solve_epnp,
)
from .geom import CameraIntrinsics, GeometryError, OrientedBox3, Plane3, Rotation3, box_vertices, project
from .metrics import (
    PRCurve,
    add_metric,
    average_precision,
    iou2d_projection,
    iou3d,
    iou3d_mc,
    rep_metric,
)
from .targets import (
    EncoderConfig,
    GridSpec,
    detection_loss,
    encode_displacements,
    encode_heatmap,
    encode_targets,
    regression_loss,
    shape_loss,
)

__version__ = "0.1.0"
