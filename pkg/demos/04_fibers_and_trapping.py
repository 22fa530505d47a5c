"""How fast puzzle pieces around a circle point shrink, and where the fixed points end up.

Pieces are indexed by pullback depth. At the critical point they are squeezed
by the puzzle disks, but the disks only advance one scale per R_n iterates,
so the diameters fall slowly. The printout shows both numbers side by side.

    python3 demos/04_fibers_and_trapping.py
"""

from siegelab.blaschke_family import canonical_member
from siegelab.bubbles_puzzles import OrbitCombinatorics, fiber_diameter, trapping_check
from siegelab.cf_engine import RotationNumber, return_times

rho = RotationNumber.golden(30)
F = canonical_member(rho)
comb = OrbitCombinatorics(F, rho)
R = return_times(rho).R

depths = [0, 2, 5, 10, 18, 30]
for s in (0.0, 0.3717):
    curve = fiber_diameter(F, comb, s, max(depths), size=256, depths=depths)
    d0 = curve[0][1]
    print(f"\npoint s = {s}")
    for n, diam in curve:
        line = f"  depth {n:2d}  diameter {diam:7.4f}  ratio {diam / d0:.4f}"
        if s == 0.0:
            line += f"  disk scale reached {max(m for m in range(len(R)) if R[m] <= n)}"
        print(line)

rep = trapping_check(F, comb, n_max=4, size=96)
print(f"\nfixed points off the circle leave the neighborhood at depth {rep.first_trapping_depth}")
print(f"0 and infinity stay outside at every depth: {rep.origin_infinity_outside}")
