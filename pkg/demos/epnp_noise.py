# How EPnP on the eight box vertices degrades with pixel noise.
#
# Without noise the solver is exact up to floating point. With noise the
# rotation error grows roughly linearly.

import numpy as np

from boxpose import solve_epnp
from boxpose.geom import box_vertices, geodesic_distance, project
from boxpose.scenes import random_box_in_view, random_camera

rng = np.random.default_rng(1)
cam = random_camera(rng)
box = random_box_in_view(rng, cam, min_extent_px=100)
uv = project(cam, box_vertices(box))

sol = solve_epnp(uv, cam)
print("true size ratios     ", (box.size / box.size.max()).round(6))
print("recovered size ratios", sol.size_ratios.round(6))
print("rotation error (rad) ", geodesic_distance(sol.rotation, box.rotation))

# The answer is only known up to scale: the center is normalised to depth 1.
print("center direction", sol.translation_dir.round(4), "true center / depth", (box.center / box.center[2]).round(4))

noise = rng.normal(size=uv.shape)
for sigma in [0.5, 1.0, 2.0, 4.0]:
    s = solve_epnp(uv + sigma * noise, cam)
    print(f"noise {sigma:3.1f} px -> rotation error {np.degrees(geodesic_distance(s.rotation, box.rotation)):.2f} deg")
