"""From a continued fraction to a Siegel circle map.

Start with the golden mean, look at its closest-return times, pick the
Blaschke product whose circle restriction rotates by exactly that number,
and watch the renormalization ratios stay bounded as the scale shrinks.

    python3 demos/01_rotation_and_circle.py
"""

import cmath
import time

from siegelab.blaschke_family import canonical_member, critical_points, fixed_points
from siegelab.cf_engine import RotationNumber, convergents, return_times, value, verify_growth_lemmas
from siegelab.circle_maps import rotation_number, verify_real_bounds

rho = RotationNumber.golden(20)
print(f"golden mean to 20 terms: {value(rho)}")

times = return_times(rho)
print("closest-return times q_n:", times.q[:12])
print("scale lengths r_n = q_n + q_{n+1}:", times.r[:10])
print("cumulative R_n:", times.R[:10])
print("last three convergents:", [str(c) for c in convergents(rho)[-3:]])

report = verify_growth_lemmas(rho)
print(f"growth inequalities hold for every clause: {report.ok}")

t = time.perf_counter()
F = canonical_member(rho)
print(f"\nsolved lambda = {F.lam:.10f} in {time.perf_counter() - t:.1f}s")

lift = F.circle_lift()
est = rotation_number(lift, rho_hint=rho)
print(f"measured rotation number {est.estimate:.15f} (error bound {est.error:.1e})")

crit = critical_points(F).near(1.0)
print(f"critical point at z = 1 with local degree {crit.local_degree}")
off_circle = [z for z in fixed_points(F) if cmath.isfinite(z) and 1e-9 < abs(z) and abs(abs(z) - 1) > 1e-6]
print("finite nonzero fixed points off the circle:", [f"{z:.4f}" for z in off_circle])

# the partition ratios K_n stay bounded while the arcs shrink geometrically
bounds = verify_real_bounds(lift, rho, n_max=12)
for n, k in bounds.K.items():
    print(f"  n={n:2d}  K_n={k:7.3f}  |I_n|={bounds.arc_lengths.get(n, float('nan')):.3e}")
print(f"arc lengths shrink by about {bounds.decay:.3f} per level (R^2 = {bounds.r_squared:.5f})")
