"""External rays and equipotentials of the golden Blaschke product, drawn over its basin.

The Green's function of the basin of infinity doubles under the map, and the
ray at angle t is carried onto the ray at angle 2t. Both facts are checked
numerically on the traced curves before the picture is written.

    python3 demos/02_rays_and_picture.py [out.png]
"""

import sys

import numpy as np

from siegelab.blaschke_family import canonical_member
from siegelab.cf_engine import RotationNumber
from siegelab.rays_potentials import check_equivariance, equipotential, scene_json, trace_rays
from siegelab.render import render, save_png

out = sys.argv[1] if len(sys.argv) > 1 else "golden_rays.png"

F = canonical_member(RotationNumber.golden(20))
angles = np.arange(16) / 16
rays = trace_rays(F, angles, depth=14)
eqs = [equipotential(F, level, 256) for level in (1.5, 2.0, 4.0)]

rep = check_equivariance(F, rays, eqs)
print(f"largest |G(F z) - 2 G(z)| along the curves: {rep.potential_defect:.2e}")
print(f"largest gap between F(ray t) and ray 2t:     {rep.ray_mismatch:.2e}")

for ray in rays[:4]:
    tip = ray.points[-1]
    print(f"ray {ray.angle:.4f}: {len(ray.points)} points, innermost at {tip:.4f}, potential {ray.potentials[-1]:.2e}")

img = render(F, center=0.5 + 0j, half_width=3.5, size=640, scene=scene_json(rays, eqs))
save_png(img, out)
print(f"wrote {out}")
