"""Conformal modulus by discrete extremal length, Poincaré neighborhoods, bounded turning.

Moduli are computed on a node grid. Every node is classified as held at 0,
held at 1, free, or excluded; neighbouring nodes are joined by conductances
(anisotropic when the two grid spacings differ) and the discrete harmonic
function is found by a sparse solve. The Dirichlet energy E of that function
is the discrete capacity and the modulus is 1/E, normalized so that the round
annulus r < |z| < R has modulus log(R/r)/(2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pyamg
import shapely
from scipy import ndimage
from scipy.sparse import coo_matrix

from .bubbles_puzzles import PlanarRegion

DEFAULT_LADDER = (256, 512, 1024)
SOLVER_TOL = 1e-10

HELD_LOW, HELD_HIGH, FREE, EXCLUDED = 0, 1, 2, -1


class DegenerateAnnulus(ValueError):
    pass


class SolverDivergence(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


# ---------------------------------------------------------------------------
# simple regions


@dataclass(frozen=True)
class DiskRegion:
    center: complex
    radius: float

    def contains(self, w):
        return np.abs(np.asarray(w) - self.center) <= self.radius * (1 + 1e-12)

    def interior(self, w, h=0.0):
        return np.abs(np.asarray(w) - self.center) < self.radius * (1 - 1e-12)

    def bounds(self) -> tuple[complex, complex]:
        r = self.radius * (1 + 1j)
        return self.center - r, self.center + r


def polygon_region(points) -> PlanarRegion:
    return PlanarRegion(np.asarray(points, dtype=complex), None, 0)


def square(center: complex = 0j, side: float = 1.0) -> PlanarRegion:
    s = side / 2
    return polygon_region([center + s * (-1 - 1j), center + s * (1 - 1j),
                           center + s * (1 + 1j), center + s * (-1 + 1j)])


def rectangle(width: float, height: float, corner: complex = 0j) -> PlanarRegion:
    return polygon_region([corner, corner + width, corner + width + 1j * height, corner + 1j * height])


def _region_mask(region, Z, h):
    if hasattr(region, "interior"):
        return region.interior(Z, h)
    return region.contains(Z)


# ---------------------------------------------------------------------------
# grids and the conductance solve


@dataclass(frozen=True)
class NodeGrid:
    """Nodes x0 + i hx, y0 + j hy; with ``periodic`` the last row wraps to the first."""

    x0: float
    y0: float
    hx: float
    hy: float
    nx: int
    ny: int
    periodic: bool = False

    def coordinates(self):
        x = self.x0 + self.hx * np.arange(self.nx)
        y = self.y0 + self.hy * np.arange(self.ny)
        return x[None, :] + 1j * y[:, None]


def square_grid(lo: complex, hi: complex, cells: int, margin_cells: int = 2) -> NodeGrid:
    """Node grid with ``cells`` intervals along the longer side of the box, padded by a few cells."""
    side = max(hi.real - lo.real, hi.imag - lo.imag)
    h = side / (cells - 2 * margin_cells)
    cx, cy = 0.5 * (lo.real + hi.real), 0.5 * (lo.imag + hi.imag)
    half = 0.5 * cells * h
    return NodeGrid(cx - half, cy - half, h, h, cells + 1, cells + 1)


def dirichlet_energy(codes: np.ndarray, hx: float, hy: float, periodic: bool = False):
    """Energy of the discrete harmonic function equal to 0 / 1 on held nodes; returns (energy, potential)."""
    ny, nx = codes.shape
    idx = np.arange(nx * ny).reshape(ny, nx)
    live = codes != EXCLUDED
    rows, cols, wts = [], [], []
    pairs = [((slice(None), slice(0, -1)), (slice(None), slice(1, None)), hy / hx),
             ((slice(0, -1), slice(None)), (slice(1, None), slice(None)), hx / hy)]
    for a, b, w in pairs:
        ok = live[a] & live[b]
        rows.append(idx[a][ok])
        cols.append(idx[b][ok])
        wts.append(np.full(ok.sum(), w))
    if periodic:
        ok = live[-1] & live[0]
        rows.append(idx[-1][ok])
        cols.append(idx[0][ok])
        wts.append(np.full(ok.sum(), hx / hy))
    i = np.concatenate(rows)
    j = np.concatenate(cols)
    w = np.concatenate(wts)
    flat = codes.ravel()
    if np.any(((flat[i] == HELD_LOW) & (flat[j] == HELD_HIGH)) | ((flat[i] == HELD_HIGH) & (flat[j] == HELD_LOW))):
        raise DegenerateAnnulus("the two boundary components touch at grid resolution")
    free = np.nonzero(flat == FREE)[0]
    if free.size == 0:
        raise DegenerateAnnulus("no free nodes between the boundary components")
    n = nx * ny
    W = coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                   shape=(n, n)).tocsr()
    degree = np.asarray(W.sum(axis=1)).ravel()
    u = np.where(flat == HELD_HIGH, 1.0, 0.0)
    Wff = W[free][:, free]
    A = (-Wff).tolil()
    A.setdiag(degree[free])
    A = A.tocsr()
    b = W[free] @ u
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
    residuals: list[float] = []
    x = ml.solve(b, tol=SOLVER_TOL, accel="cg", maxiter=500, residuals=residuals)
    res = float(np.linalg.norm(b - A @ x) / max(np.linalg.norm(b), 1e-300))
    if not res < 1e-7:
        raise SolverDivergence(f"linear solve stalled at relative residual {res:.2e}", res)
    u[free] = x
    energy = float(np.sum(w * (u[i] - u[j]) ** 2))
    return energy, u.reshape(ny, nx)


def _check_separation(codes, cells: float = 2.0):
    low = codes == HELD_LOW
    high = codes == HELD_HIGH
    if not low.any() or not high.any():
        raise DegenerateAnnulus("a boundary component is missing from the grid")
    gap = ndimage.distance_transform_edt(~high)[low].min()
    if gap <= cells:
        raise DegenerateAnnulus(f"boundary components only {gap:.1f} grid cells apart")
    return float(gap)


# ---------------------------------------------------------------------------
# estimates


@dataclass
class ModulusEstimate:
    value: float
    resolution: int
    extrapolated: float
    error: float
    ladder: list[tuple[int, float]] = field(default_factory=list)

    @property
    def changes(self) -> list[float]:
        v = [m for _, m in self.ladder]
        return [b - a for a, b in zip(v, v[1:])]

    @property
    def contraction(self) -> float | None:
        """Ratio of the last two successive changes along the ladder (about 0.5 for first-order convergence)."""
        c = self.changes
        if len(c) < 2 or c[-2] == 0:
            return None
        return abs(c[-1] / c[-2])

    def to_json(self):
        return {"value": self.value, "resolution_ladder": [[int(n), float(m)] for n, m in self.ladder],
                "extrapolated": self.extrapolated, "error": self.error}

    @classmethod
    def from_json(cls, data):
        ladder = [(int(n), float(m)) for n, m in data["resolution_ladder"]]
        return cls(float(data["value"]), ladder[-1][0], float(data["extrapolated"]),
                   float(data["error"]), ladder)


def richardson(ladder: list[tuple[int, float]]) -> ModulusEstimate:
    """Extrapolate the leading h term from the two finest dyadic levels."""
    (n1, m1), (n2, m2) = ladder[-2], ladder[-1]
    ratio = n2 / n1
    extrap = (ratio * m2 - m1) / (ratio - 1)
    return ModulusEstimate(m2, n2, extrap, abs(m2 - extrap), list(ladder))


@dataclass
class AnnulusSpec:
    """Region between ``inner`` and ``outer``; ``chart='log'`` solves in w = log(z - center)."""

    outer: object
    inner: object
    resolutions: tuple[int, ...] = DEFAULT_LADDER
    chart: str = "plane"
    center: complex = 0j
    radii: tuple[float, float] | None = None
    window: tuple[complex, complex] | None = None

    def mapped(self, a: complex, b: complex) -> "AnnulusSpec":
        """Image under z -> a z + b (regions are composed with the inverse map)."""
        return AnnulusSpec(_Affine(self.outer, a, b), _Affine(self.inner, a, b), self.resolutions,
                           self.chart, a * self.center + b,
                           None if self.radii is None else (abs(a) * self.radii[0], abs(a) * self.radii[1]),
                           None if self.window is None else _affine_box(self.window, a, b))


class _Affine:
    def __init__(self, region, a, b):
        self.region, self.a, self.b = region, a, b

    def contains(self, w):
        return self.region.contains((np.asarray(w) - self.b) / self.a)

    def interior(self, w, h):
        return _region_mask(self.region, (np.asarray(w) - self.b) / self.a, h / abs(self.a))

    def bounds(self):
        return _affine_box(self.region.bounds(), self.a, self.b)


def _affine_box(box, a, b):
    lo, hi = box
    corners = np.array([lo, complex(hi.real, lo.imag), hi, complex(lo.real, hi.imag)]) * a + b
    return complex(corners.real.min(), corners.imag.min()), complex(corners.real.max(), corners.imag.max())


def round_annulus(r_in: float, r_out: float, center: complex = 0j,
                  resolutions: tuple[int, ...] = DEFAULT_LADDER) -> AnnulusSpec:
    return AnnulusSpec(DiskRegion(center, r_out), DiskRegion(center, r_in), resolutions, "log",
                       center, (r_in, r_out))


def annulus_codes(spec: AnnulusSpec, cells: int):
    if spec.chart == "log":
        r_in, r_out = spec.radii
        span = math.log(r_out / r_in)
        hu = span / cells
        # square cells unless that needs more angular than radial nodes
        ntheta = max(8, min(cells, int(round(2 * math.pi / hu))))
        grid = NodeGrid(math.log(r_in), 0.0, hu, 2 * math.pi / ntheta, cells + 1, ntheta, True)
        Z = spec.center + np.exp(grid.coordinates())
        h = hu * np.abs(Z - spec.center)
    else:
        lo, hi = spec.window or spec.outer.bounds()
        grid = square_grid(lo, hi, cells)
        Z = grid.coordinates()
        h = grid.hx
    codes = np.full(Z.shape, HELD_HIGH, dtype=np.int8)
    codes[_region_mask(spec.outer, Z, h)] = FREE
    codes[spec.inner.contains(Z)] = HELD_LOW
    return grid, codes


def modulus_at(spec: AnnulusSpec, cells: int) -> float:
    grid, codes = annulus_codes(spec, cells)
    if spec.chart != "log":
        _check_separation(codes)
    energy, _ = dirichlet_energy(codes, grid.hx, grid.hy, grid.periodic)
    return 1.0 / energy


def modulus_annulus(spec: AnnulusSpec) -> ModulusEstimate:
    ladder = [(n, modulus_at(spec, n)) for n in spec.resolutions]
    return richardson(ladder)


def extremal_length_quadrilateral(region, arc_a, arc_b, resolutions: tuple[int, ...] = DEFAULT_LADDER,
                                  window: tuple[complex, complex] | None = None) -> ModulusEstimate:
    """Extremal length of the curves in ``region`` joining the boundary arcs ``arc_a`` and ``arc_b``.

    Arcs are polylines along the boundary; grid nodes of the closed region
    closer than one cell to an arc are held at 0 or 1 and all other boundary
    nodes are free (reflecting).
    """
    la = shapely.LineString(np.column_stack([np.real(arc_a), np.imag(arc_a)]))
    lb = shapely.LineString(np.column_stack([np.real(arc_b), np.imag(arc_b)]))
    if la.distance(lb) == 0:
        raise ValueError("marked arcs must be disjoint")
    ladder = []
    for cells in resolutions:
        lo, hi = window or region.bounds()
        grid = square_grid(lo, hi, cells)
        Z = grid.coordinates()
        # nodes on an arc plus the first row inside, for arcs off the grid lines
        tol = 0.999 * grid.hx
        inside = region.contains(Z)
        codes = np.where(inside, FREE, EXCLUDED).astype(np.int8)
        da = shapely.distance(la, shapely.points(Z.real, Z.imag))
        db = shapely.distance(lb, shapely.points(Z.real, Z.imag))
        codes[inside & (da < tol)] = HELD_LOW
        codes[inside & (db < tol)] = HELD_HIGH
        if not (codes == HELD_LOW).any() or not (codes == HELD_HIGH).any():
            raise DegenerateAnnulus(f"a marked arc meets no grid node at {cells} cells")
        energy, _ = dirichlet_energy(codes, grid.hx, grid.hy)
        ladder.append((cells, 1.0 / energy))
    return richardson(ladder)


@dataclass
class SuperadditivityReport:
    enclosing: ModulusEstimate
    members: list[ModulusEstimate]
    slack: float

    @property
    def combined_error(self) -> float:
        return self.enclosing.error + sum(m.error for m in self.members)

    @property
    def ok(self) -> bool:
        return self.slack >= -2 * self.combined_error

    def to_json(self):
        return {"enclosing": self.enclosing.to_json(), "members": [m.to_json() for m in self.members],
                "slack": self.slack, "combined_error": self.combined_error, "ok": self.ok}


def annuli_nested(inner_spec: AnnulusSpec, outer_spec: AnnulusSpec, samples: int = 512) -> bool:
    """The outer disk of ``inner_spec`` lies inside the inner disk of ``outer_spec`` (sampled)."""
    lo, hi = inner_spec.window or inner_spec.outer.bounds()
    x = np.linspace(lo.real, hi.real, int(math.sqrt(samples)) * 4)
    y = np.linspace(lo.imag, hi.imag, int(math.sqrt(samples)) * 4)
    Z = x[None, :] + 1j * y[:, None]
    inside = inner_spec.outer.contains(Z)
    return bool(np.all(outer_spec.inner.contains(Z[inside])))


def check_superadditivity(enclosing, members) -> SuperadditivityReport:
    """Grötzsch check: mod(enclosing) >= sum of member moduli up to the combined error bars.

    Arguments may be AnnulusSpec (solved here) or precomputed ModulusEstimate.
    Members must be listed from the innermost outwards.
    """
    specs = [m for m in members if isinstance(m, AnnulusSpec)]
    for a, b in zip(specs, specs[1:]):
        if not annuli_nested(a, b):
            raise ValueError("member annuli are not nested")
    est = [modulus_annulus(m) if isinstance(m, AnnulusSpec) else m for m in members]
    enc = modulus_annulus(enclosing) if isinstance(enclosing, AnnulusSpec) else enclosing
    slack = enc.extrapolated - sum(m.extrapolated for m in est)
    return SuperadditivityReport(enc, est, slack)


# ---------------------------------------------------------------------------
# Poincaré neighborhoods


@dataclass(frozen=True)
class PoincareNeighborhood:
    """Points seeing the real interval (a, b) under an angle larger than theta, plus the interval itself.

    For theta <= pi/2 this is the union of two disks symmetric in the real
    axis through a and b; for theta > pi/2 it is their intersection (a lens).
    """

    a: float
    b: float
    theta: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("interval must have a < b")
        if not 0 < self.theta < math.pi:
            raise ValueError("angle must lie in (0, pi)")

    @property
    def half_length(self) -> float:
        return 0.5 * (self.b - self.a)

    @property
    def radius(self) -> float:
        return self.half_length / math.sin(self.theta)

    def centers(self) -> tuple[complex, complex]:
        m = 0.5 * (self.a + self.b)
        off = self.half_length / math.tan(self.theta)
        return complex(m, off), complex(m, -off)

    def disks(self) -> tuple[DiskRegion, DiskRegion]:
        c1, c2 = self.centers()
        return DiskRegion(c1, self.radius), DiskRegion(c2, self.radius)

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            seen = np.abs(np.angle((self.b - z) / (self.a - z)))
        on_interval = (np.abs(z.imag) < 1e-300) & (z.real > self.a) & (z.real < self.b)
        return (seen > self.theta) | on_interval

    def boundary(self, n: int = 512) -> np.ndarray:
        """Closed boundary polyline: the upper arc from b to a, then its mirror image."""
        c, _ = self.centers()
        R = self.radius
        start = math.atan2(-c.imag, self.b - c.real)
        sweep = 2 * math.pi - 2 * self.theta  # the arc on the viewing side of the chord
        t = start + sweep * np.linspace(0, 1, n // 2, endpoint=False)
        upper = c + R * np.exp(1j * t)
        lower = np.conj(upper)[::-1]
        return np.concatenate([upper, np.array([self.a + 0j]), lower[:-1], np.array([self.b + 0j])])

    def area(self) -> float:
        R = self.radius
        return R * R * (2 * math.pi - 2 * self.theta + math.sin(2 * self.theta))

    def hausdorff_to_interval(self) -> float:
        """Largest distance from the region to the interval (the cap height)."""
        return self.half_length / math.tan(self.theta / 2)

    def to_json(self):
        return {"interval": [self.a, self.b], "theta": self.theta,
                "disks": [{"center": [c.real, c.imag], "radius": self.radius} for c in self.centers()]}


def poincare_neighborhood(interval, theta: float) -> PoincareNeighborhood:
    a, b = interval
    return PoincareNeighborhood(float(a), float(b), float(theta))


# ---------------------------------------------------------------------------
# bounded turning


def three_point_turning(points, max_samples: int = 400) -> float:
    """Largest ratio diam(smaller arc between a and b) / |a - b| over sampled pairs on a closed curve."""
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < 100:
        raise ValueError("need at least 100 samples")
    if z.size > max_samples:
        z = z[np.linspace(0, z.size, max_samples, endpoint=False).astype(int)]
    n = z.size
    D = np.abs(z[:, None] - z[None, :])
    lower = np.tril(np.ones((n, n), dtype=bool))
    forward = np.empty((n, n))
    for a in range(n):
        order = (a + np.arange(n)) % n
        sub = D[np.ix_(order, order)]
        reach = np.where(lower, sub, 0.0).max(axis=1)
        forward[a, order] = np.maximum.accumulate(reach)
    arc_diam = np.minimum(forward, forward.T)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(D > 0, arc_diam / D, 0.0)
    return float(ratio.max())
