# Pasting an alpha-matted foreground onto a background at a random placement.

import numpy as np

from boxpose.synth import ForegroundAsset, PlacementConfig, composite, sample_placement

rng = np.random.default_rng(3)

# A soft-edged disc as the foreground.
h, w = 40, 60
yy, xx = np.mgrid[0:h, 0:w]
r = np.hypot((xx - (w - 1) / 2) / (w / 2), (yy - (h - 1) / 2) / (h / 2))
rgba = np.zeros((h, w, 4), np.uint8)
rgba[..., 0] = 220
rgba[..., 3] = np.clip((1.0 - r) * 500, 0, 255).astype(np.uint8)
fg = ForegroundAsset(rgba)

bg = rng.integers(0, 256, (120, 160, 3), dtype=np.uint8)

# Allow up to 20% of the placed asset box to hang over the frame edge.
pl = sample_placement(rng, (160, 120), (w, h), PlacementConfig(overhang=0.2))
print("placement", pl)

sample = composite(fg, bg, pl)
print("mask pixels", int(sample.mask.sum()))
untouched = sample.alpha == 0
print("untouched pixels equal background:", np.array_equal(sample.image[untouched], bg[untouched]))
