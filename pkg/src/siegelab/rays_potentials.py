"""Green's function at infinity, Böttcher angles, external rays and equipotentials.

Near infinity F(z) = c z^d u(z) with u -> 1. With kappa^{d-1} = c the Böttcher
coordinate is

    log phi(z) = log(kappa z) + sum_k d^{-(k+1)} Log u(F^k z),

and for the Blaschke family u(z) = prod (z - 1/conj(a_i)) / (z - a_i). The
principal branch of Log u is continuous away from the segments joining a_i to
1/conj(a_i); for real zeros these segments lie in the filled Julia set, so the
formula gives the correct angle throughout the immediate basin of infinity.
"""

from __future__ import annotations

import cmath
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

ESCAPE_RADIUS = 1e8
SEED_POTENTIAL = math.log(1e4)
TWO_PI = 2 * math.pi


class NotInBasin(ValueError):
    pass


class RayTraceFailure(RuntimeError):
    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class PowerMap:
    """z -> z^d, the reference map whose Julia set is the unit circle."""

    def __init__(self, d: int = 2):
        self.d = d
        self.zeros = ()

    def __call__(self, z):
        return np.asarray(z, dtype=complex) ** self.d

    def derivative(self, z):
        return self.d * np.asarray(z, dtype=complex) ** (self.d - 1)

    def leading_coefficient(self):
        return 1.0 + 0j


def degree_at_infinity(F) -> int:
    return F.d


def kappa(F) -> complex:
    c = complex(F.leading_coefficient())
    if c == 0:
        raise ValueError("map has lower degree at infinity (a zero at the origin)")
    return c ** (1.0 / (F.d - 1))


def _u(F, z):
    out = np.ones_like(z)
    for a in F.zeros:
        out = out * (z - 1 / np.conj(a)) / (z - a)
    return out


def _step_with_derivative(F, z, dz):
    w = F(z)
    return w, dz * F.derivative(z)


# potentials and angles

def green_potential(F, z, max_iter: int = 100_000):
    """G(z) = lim d^{-n} log|F^n z|; NaN (arrays) or NotInBasin (scalars) if z does not escape."""
    scalar = np.isscalar(z)
    z = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    d = F.d
    k = kappa(F)
    out = np.full(z.shape, np.nan)
    n = np.zeros(z.shape, dtype=np.int64)
    active = np.ones(z.shape, dtype=bool)
    for _ in range(max_iter):
        big = active & (np.abs(z) > ESCAPE_RADIUS)
        if big.any():
            zb = z[big]
            far = np.log(np.abs(k * zb)) + np.log(np.abs(_u(F, zb))) / d
            out[big] = far / float(d) ** n[big]
            active &= ~big
        if not active.any():
            break
        z[active] = F(z[active])
        n[active] += 1
    if scalar:
        if np.isnan(out[0]):
            raise NotInBasin(f"orbit of {complex(z[0])} did not escape in {max_iter} iterations")
        return float(out[0])
    return out


@dataclass
class BasinGrid:
    """Per-point classification after a fixed number of iterations.

    ``kind`` is 0 for points whose orbit never met the closed unit disk (the
    immediate basin of infinity, up to measure zero), 1 for points whose orbit
    entered it. ``potential`` is exact for escaped points and otherwise an upper
    bound; ``angle`` is the Böttcher angle accurate to ``angle_error``.
    """

    kind: np.ndarray
    potential: np.ndarray
    angle: np.ndarray
    escaped: np.ndarray
    entry_step: np.ndarray
    iterations: int

    @property
    def angle_error(self) -> float:
        return 0.5 ** (self.iterations + 1)


def basin_grid(F, Z, iterations: int) -> BasinGrid:
    """Classify points outside the closed unit disk after ``iterations`` steps."""
    Z = np.asarray(Z, dtype=complex)
    shape = Z.shape
    z = Z.ravel().copy()
    d = F.d
    k = kappa(F)
    m = z.size
    kind = np.zeros(m, dtype=np.int8)
    entry = np.full(m, -1, dtype=np.int64)
    escaped = np.zeros(m, dtype=bool)
    pot = np.full(m, np.nan)
    angle_sum = np.angle(k * z)
    lagged = angle_sum.copy()  # sum without the most recent term
    kind[np.abs(z) <= 1] = 1
    entry[np.abs(z) <= 1] = 0
    active = np.abs(z) > 1
    weight = 1.0
    for step in range(iterations):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        zi = z[idx]
        weight /= d
        lagged[idx] = angle_sum[idx]
        angle_sum[idx] += weight * np.angle(_u(F, zi))
        zi = F(zi)
        z[idx] = zi
        a = np.abs(zi)
        inside = a <= 1
        if inside.any():
            hit = idx[inside]
            kind[hit] = 1
            entry[hit] = step + 1
            angle_sum[hit] = lagged[hit]
            active[hit] = False
        out = a > ESCAPE_RADIUS
        if out.any():
            hit = idx[out]
            zb = z[hit]
            pot[hit] = (np.log(np.abs(k * zb)) + np.log(np.abs(_u(F, zb))) / d) / float(d) ** (step + 1)
            escaped[hit] = True
            active[hit] = False
    # unresolved points: potential bounded by the escape radius level
    bound = (math.log(abs(k) * ESCAPE_RADIUS) + 1.0) / float(d) ** iterations
    still = np.isnan(pot) & (kind == 0)
    pot[still] = bound
    angle = (angle_sum / TWO_PI) % 1.0
    return BasinGrid(kind.reshape(shape), pot.reshape(shape), angle.reshape(shape),
                     escaped.reshape(shape), entry.reshape(shape), iterations)


def external_angle(F, z, iterations: int = 200) -> float:
    g = basin_grid(F, np.array([z]), iterations)
    if g.kind[0] != 0:
        raise NotInBasin(f"{z} is not in the immediate basin of infinity")
    return float(g.angle[0])


def log_bottcher(F, z, max_iter: int = 200):
    """log phi(z) for points of the immediate basin (vectorized)."""
    z = np.asarray(z, dtype=complex).copy()
    d = F.d
    k = kappa(F)
    total = np.log(k * z)
    weight = 1.0
    active = np.abs(z) < 1e14
    for _ in range(max_iter):
        if not active.any():
            break
        weight /= d
        total[active] += weight * np.log(_u(F, z[active]))
        z[active] = F(z[active])
        active &= np.abs(z) < 1e14
    return total


def inverse_bottcher_far(F, w, tol: float = 1e-15, max_iter: int = 60):
    """Solve log phi(z) = w for points far out (Re w >= seed potential)."""
    w = np.asarray(w, dtype=complex)
    k = kappa(F)
    z = np.exp(w) / k
    for _ in range(max_iter):
        r = log_bottcher(F, z) - w
        r = r.real + 1j * ((r.imag + math.pi) % TWO_PI - math.pi)
        z = z * np.exp(-r)
        if np.max(np.abs(r)) < tol:
            break
    return z


# rays

@dataclass
class RayTrace:
    angle: float
    points: np.ndarray
    potentials: np.ndarray
    landing: tuple[complex, float] | None = None
    flagged: bool = False

    def tail_diameter(self, count: int = 10) -> float:
        tail = self.points[-count:]
        return float(np.max(np.abs(tail[:, None] - tail[None, :])))

    def to_rows(self):
        for g, z in zip(self.potentials, self.points):
            yield {"potential": float(g), "re": float(z.real), "im": float(z.imag)}

    def to_csv(self, path) -> None:
        _write_csv(path, self.to_rows())

    def to_json(self):
        out = {"angle": self.angle, "points": [[z.real, z.imag] for z in self.points],
               "potentials": [float(g) for g in self.potentials], "flagged": self.flagged}
        if self.landing:
            out["landing"] = {"point": [self.landing[0].real, self.landing[0].imag],
                              "tail_diameter": self.landing[1]}
        return out

    def reflected(self) -> "RayTrace":
        pts = 1 / np.conj(self.points)
        land = None
        if self.landing:
            land = (1 / np.conj(self.landing[0]), self.landing[1])
        return RayTrace(self.angle, pts, self.potentials.copy(), land, self.flagged)


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["potential", "re", "im"])
        w.writeheader()
        w.writerows(rows)


def _newton_iterate(F, z, target, m, tol=1e-13, max_iter=60):
    """Solve F^m(z) = target from the initial guess z (vectorized, damped).

    A point counts as converged when the residual is small relative to the
    target or when the Newton correction drops to rounding level.
    """
    z = z.copy()

    def resid(x):
        w = x.copy()
        dw = np.ones_like(x)
        for _ in range(m):
            dw = dw * F.derivative(w)
            w = F(w)
        return w - target, dw

    r, dw = resid(z)
    scale = np.maximum(np.abs(target), 1.0)
    done = np.abs(r) < tol * scale
    for _ in range(max_iter):
        if done.all():
            break
        step = np.where(done, 0, r / dw)
        lam = np.ones(z.shape)
        for _ in range(30):
            trial = z - lam * step
            with np.errstate(all="ignore"):
                r_new, dw_new = resid(trial)
            better = (np.abs(r_new) < np.abs(r)) | done
            if better.all():
                break
            lam = np.where(better, lam, lam / 2)
        tiny = np.abs(step) < 1e-15 * (1 + np.abs(z))
        z = np.where(done, z, trial)
        r = np.where(done, r, r_new)
        dw = np.where(done, dw, dw_new)
        done = done | tiny | (np.abs(r) < tol * scale)
    return z, done


def trace_rays(F, angles, depth: int = 40, steps_per_level: int = 8,
               seed_potential: float = SEED_POTENTIAL) -> list[RayTrace]:
    """Trace external rays inward from potential ``seed_potential`` through ``depth`` halvings."""
    t = np.atleast_1d(np.asarray(angles, dtype=float)) % 1.0
    d = F.d
    S = steps_per_level
    levels = depth * S
    pots = seed_potential * float(d) ** (-np.arange(levels + 1) / S)
    pts = np.empty((t.size, levels + 1), dtype=complex)
    z = inverse_bottcher_far(F, seed_potential + 1j * TWO_PI * t)
    pts[:, 0] = z
    alive = levels
    for j in range(1, levels + 1):
        m = -(-j // S)
        g_far = pots[j] * float(d) ** m
        t_far = (t * float(d) ** m) % 1.0 if m < 60 else (t * (2.0**m)) % 1.0
        target = inverse_bottcher_far(F, g_far + 1j * TWO_PI * t_far)
        z, ok = _newton_iterate(F, z, target, m)
        if not ok.all():
            sub = _refine_step(F, pts[:, j - 1], t, pots[j - 1], pots[j], m)
            if sub is None:
                alive = j - 1
                break
            z = sub
        pts[:, j] = z
    out = []
    for i, ang in enumerate(t):
        tr = RayTrace(float(ang), pts[i, : alive + 1], pots[: alive + 1].copy())
        if alive >= 10:
            diam = tr.tail_diameter()
            if diam < 1e-6:
                tr.landing = (complex(tr.points[-1]), diam)
        out.append(tr)
    if alive < levels:
        raise RayTraceFailure(f"ray trace failure at level {alive / S:.2f}", out)
    return out


def _refine_step(F, z, t, g0, g1, m, pieces: int = 8):
    """Retry a failed continuation step with ``pieces`` smaller sub-steps."""
    d = F.d
    for g in np.geomspace(g0, g1, pieces + 1)[1:]:
        mm = max(m, int(math.ceil(math.log(SEED_POTENTIAL / g, d) - 1e-12)))
        g_far = g * float(d) ** mm
        target = inverse_bottcher_far(F, g_far + 1j * TWO_PI * ((t * float(d) ** mm) % 1.0))
        z, ok = _newton_iterate(F, z, target, mm)
        if not ok.all():
            return None
    return z


def trace_external_ray(F, t: float, depth: int = 40, steps_per_level: int = 8) -> RayTrace:
    return trace_rays(F, [t], depth, steps_per_level)[0]


def internal_ray(F, t: float, depth: int = 40, steps_per_level: int = 8) -> RayTrace:
    """Reflection of the external ray of angle t through the unit circle."""
    return trace_external_ray(F, t, depth, steps_per_level).reflected()


# equipotentials

@dataclass
class Equipotential:
    level: float
    points: np.ndarray
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def potential(self) -> float:
        return math.log(self.level)

    def winding_number(self, about: complex = 0j) -> int:
        w = np.angle(np.roll(self.points - about, -1) / (self.points - about))
        return int(round(np.sum(w) / TWO_PI))

    def to_rows(self):
        g = self.potential
        for z in self.points:
            yield {"potential": g, "re": float(z.real), "im": float(z.imag)}

    def to_csv(self, path) -> None:
        _write_csv(path, self.to_rows())

    def to_json(self):
        return {"level": self.level, "points": [[z.real, z.imag] for z in self.points]}


def equipotential(F, level: float, n_samples: int = 512, steps_per_level: int = 8) -> Equipotential:
    """The curve G = log(level), sampled at equally spaced Böttcher angles."""
    if level <= 1:
        raise ValueError("equipotential level must exceed 1")
    g = math.log(level)
    t = np.arange(n_samples) / n_samples
    d = F.d
    m = max(0, int(math.ceil(math.log(SEED_POTENTIAL / g, d) - 1e-12)))
    if m == 0:
        return Equipotential(level, inverse_bottcher_far(F, g + 1j * TWO_PI * t), t)
    # descend along the rays level by level, then land exactly on G = log(level)
    rays = trace_rays(F, t, depth=m, steps_per_level=steps_per_level)
    start = np.array([r.points[-1] for r in rays])
    target = inverse_bottcher_far(F, g * float(d) ** m + 1j * TWO_PI * ((t * float(d) ** m) % 1.0))
    z, ok = _newton_iterate(F, start, target, m)
    if not ok.all():
        raise RayTraceFailure(f"equipotential at level {level} did not converge")
    return Equipotential(level, z, t)


@dataclass
class EquivarianceReport:
    """Largest |G(F z) - d G(z)| over all samples, and the largest distance between F(ray t) and ray d t."""

    potential_defect: float
    ray_mismatch: float
    samples: int

    def to_json(self):
        return {"potential_defect": self.potential_defect, "ray_mismatch": self.ray_mismatch,
                "samples": self.samples}


def check_equivariance(F, rays, equipotentials=(), steps_per_level: int = 8) -> EquivarianceReport:
    """Witness G o F = d G along the curves and F(R_t) = R_{dt} at matched potentials.

    Rays must be traced with ``steps_per_level`` samples per potential halving
    so that sample j of R_t and sample j - steps_per_level of R_{dt} sit at
    the same potential after one application of F.
    """
    d = F.d
    pts = [r.points for r in rays] + [e.points for e in equipotentials]
    # the potential each sample was traced to, not one recomputed from the same orbit
    labels = [r.potentials for r in rays] + [np.full(e.points.size, e.potential) for e in equipotentials]
    z = np.concatenate(pts) if pts else np.zeros(0, dtype=complex)
    g = np.concatenate(labels) if labels else np.zeros(0)
    gf = green_potential(F, F(z))
    pot = float(np.nanmax(np.abs(gf - d * g))) if z.size else 0.0
    by_angle = {round(r.angle % 1.0, 12): r for r in rays}
    mismatch = 0.0
    S = steps_per_level
    for r in rays:
        image = by_angle.get(round((d * r.angle) % 1.0, 12))
        if image is None:
            continue
        n = min(r.points.size, image.points.size + S)
        if n <= S:
            continue
        pushed = F(r.points[S:n])
        mismatch = max(mismatch, float(np.max(np.abs(pushed - image.points[: n - S]))))
    return EquivarianceReport(pot, mismatch, int(z.size))


def scene_json(rays=(), equipotentials=(), extra=None) -> dict:
    out = {"rays": [r.to_json() for r in rays],
           "equipotentials": [e.to_json() for e in equipotentials]}
    if extra:
        out.update(extra)
    return out


def save_scene(path, scene: dict) -> None:
    with open(path, "w") as fh:
        json.dump(scene, fh)
