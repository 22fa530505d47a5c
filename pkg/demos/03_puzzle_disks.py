"""Puzzle disks around the critical point, and the annuli between them.

Each disk D^n is pulled back along the circle from the previous one. We check
that every disk sits inside the one two scales up with room to spare, then
measure the conformal modulus of the annulus in between. Takes about a minute.

    python3 demos/03_puzzle_disks.py
"""

import time

from siegelab.blaschke_family import canonical_member
from siegelab.bubbles_puzzles import PuzzleTower
from siegelab.cf_engine import RotationNumber
from siegelab.conformal_geometry import AnnulusSpec, modulus_annulus

rho = RotationNumber.golden(30)
F = canonical_member(rho)
tower = PuzzleTower(F, rho, size=384)
print(f"first admissible scale n0 = {tower.n0}")

t = time.perf_counter()
for n in range(tower.n0, tower.n0 + 5):
    one, two = tower.nesting(n)
    disk = tower.disk(n)
    print(f"D^{n:<2d} diameter {disk.region.diameter():.4f}  degree {disk.degree}  "
          f"D^{n + 1} inside: {one.nested}  gap to D^{n + 2}: {two.separation:.4f}")
print(f"disks built in {time.perf_counter() - t:.0f}s")

moduli = {}
for n in range(tower.n0 + 2, tower.n0 + 5):
    est = modulus_annulus(AnnulusSpec(tower.disk(n - 2).region, tower.disk(n).region))
    moduli[n] = est.extrapolated
    print(f"mod(D^{n - 2} minus D^{n}) = {est.extrapolated:.4f} +- {est.error:.4f}")
print(f"smallest over largest: {min(moduli.values()) / max(moduli.values()):.3f}")
