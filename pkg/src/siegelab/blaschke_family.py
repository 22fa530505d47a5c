"""Herman Blaschke products lambda z^d prod (1 - conj(a_i) z)/(z - a_i).

The canonical member has d = 2 and a single zero 1/3; its restriction to the
unit circle has a cubic critical point at z = 1.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .cf_engine import RotationNumber, return_times, value
from .circle_maps import CircleMapLift, rotation_number, rotation_side

POLE_TOL = 1e-13
MERGE_TOL = 1e-7


class NearPoleError(ValueError):
    pass


class InvalidZeroConfiguration(ValueError):
    pass


def _poly_mul(p, q):
    out = [mpmath.mpc(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _poly_deriv(p):
    return [i * c for i, c in enumerate(p)][1:]


def _poly_sub(p, q):
    n = max(len(p), len(q))
    p = p + [mpmath.mpc(0)] * (n - len(p))
    q = q + [mpmath.mpc(0)] * (n - len(q))
    return [a - b for a, b in zip(p, q)]


def _trim(p, eps):
    while len(p) > 1 and abs(p[-1]) < eps:
        p = p[:-1]
    return p


@dataclass(frozen=True)
class HermanBlaschke:
    d: int
    lam: complex
    zeros: tuple[complex, ...]

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        object.__setattr__(self, "zeros", tuple(complex(a) for a in self.zeros))
        if self.d < 2:
            raise ValueError("degree parameter d must be at least 2")
        if len(self.zeros) != self.d - 1:
            raise ValueError(f"need d-1 = {self.d - 1} zeros, got {len(self.zeros)}")

    @classmethod
    def classical(cls, lam: complex = 1.0) -> "HermanBlaschke":
        return cls(2, lam, (1 / 3,))

    def with_lambda(self, lam: complex) -> "HermanBlaschke":
        return HermanBlaschke(self.d, lam, self.zeros)

    # evaluation

    def _check_poles(self, z):
        for a in self.zeros:
            if np.any(np.abs(z - a) < POLE_TOL):
                raise NearPoleError(f"evaluation within {POLE_TOL} of the pole {a}")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        self._check_poles(z)
        out = self.lam * z**self.d
        for a in self.zeros:
            out = out * (1 - np.conj(a) * z) / (z - a)
        return out

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        self._check_poles(z)
        ratio = np.ones_like(z)
        logd = np.zeros_like(z)
        for a in self.zeros:
            ac = np.conj(a)
            ratio = ratio * (1 - ac * z) / (z - a)
            logd = logd - ac / (1 - ac * z) - 1 / (z - a)
        return self.lam * z ** (self.d - 1) * ratio * (self.d + z * logd)

    def step(self, z: complex) -> complex:
        """Scalar evaluation without pole checks, for tight loops."""
        w = self.lam * z**self.d
        for a in self.zeros:
            w *= (1 - a.conjugate() * z) / (z - a)
        return w

    def leading_coefficient(self) -> complex:
        """F(z)/z^d as z -> infinity."""
        c = self.lam
        for a in self.zeros:
            c *= -np.conj(a)
        return complex(c)

    # polynomial forms, used for critical and fixed points

    def _numerator_denominator(self):
        lam = mpmath.mpc(self.lam.real, self.lam.imag)
        num = [mpmath.mpc(0)] * self.d + [lam]
        den = [mpmath.mpc(1)]
        for a in self.zeros:
            am = mpmath.mpc(a.real, a.imag)
            num = _poly_mul(num, [mpmath.mpc(1), -mpmath.conj(am)])
            den = _poly_mul(den, [-am, mpmath.mpc(1)])
        return num, den

    def critical_polynomial(self):
        num, den = self._numerator_denominator()
        return _poly_sub(_poly_mul(_poly_deriv(num), den), _poly_mul(num, _poly_deriv(den)))

    def fixed_point_polynomial(self):
        num, den = self._numerator_denominator()
        return _poly_sub(num, _poly_mul([mpmath.mpc(0), mpmath.mpc(1)], den))

    # circle restriction

    def circle_lift(self, offset: float | None = None) -> CircleMapLift:
        """Lift of the restriction to the unit circle in angle coordinates.

        The lift is g(x) = t + x - (1/pi) sum Arg(1 - a_i e^{-2 pi i x}). By
        default t = arg(lambda)/(2 pi) shifted by an integer so that the
        rotation number of the lift lies in [0, 1); ``offset`` sets t directly.
        """
        if offset is None:
            t = (cmath.phase(self.lam) / (2 * math.pi)) % 1.0
            m, x = self.circle_lift(t).lifted_iterate(0.0, 4000)
            t -= math.floor((m + x) / 4000 + 1e-9)
        else:
            t = float(offset)
        zeros = self.zeros
        two_pi = 2 * math.pi

        def scalar(x):
            s = 0.0
            e = cmath.exp(-two_pi * 1j * x)
            for a in zeros:
                s += cmath.phase(1 - a * e)
            return t + x - s / math.pi

        def ev(x):
            x = np.asarray(x, dtype=float)
            e = np.exp(-two_pi * 1j * x)
            s = sum(np.angle(1 - a * e) for a in zeros)
            return t + x - s / math.pi

        def deriv(x):
            x = np.asarray(x, dtype=float)
            e = np.exp(-two_pi * 1j * x)
            s = sum(np.real(a * e / (1 - a * e)) for a in zeros)
            return 1 - 2 * s

        crit = tuple(sorted(
            (cmath.phase(c.location) / two_pi) % 1.0
            for c in critical_points(self).points if c.on_circle
        ))
        return CircleMapLift(ev, deriv, kind="blaschke", scalar=scalar, critical=crit)

    def to_json(self):
        return {"d": self.d, "lambda": [self.lam.real, self.lam.imag],
                "zeros": [[a.real, a.imag] for a in self.zeros]}

    @classmethod
    def from_json(cls, data):
        lam = complex(*data["lambda"])
        return cls(int(data["d"]), lam, tuple(complex(*z) for z in data["zeros"]))


def save_registry(members, path) -> None:
    with open(path, "w") as fh:
        for m in members:
            fh.write(json.dumps(m.to_json()) + "\n")


def load_registry(path) -> list[HermanBlaschke]:
    with open(path) as fh:
        return [HermanBlaschke.from_json(json.loads(line)) for line in fh if line.strip()]


@dataclass
class CriticalPoint:
    location: complex
    local_degree: int
    on_circle: bool


@dataclass
class CriticalSet:
    points: list[CriticalPoint] = field(default_factory=list)

    def near(self, z: complex, tol: float = 1e-8) -> CriticalPoint | None:
        for c in self.points:
            if c.location != complex("inf") and abs(c.location - z) < tol:
                return c
        return None

    def finite(self):
        return [c for c in self.points if cmath.isfinite(c.location)]


def _cluster(roots, tol):
    groups: list[list] = []
    for r in roots:
        for g in groups:
            if abs(g[0] - r) < tol:
                g.append(r)
                break
        else:
            groups.append([r])
    return [(sum(g) / len(g), len(g)) for g in groups]


def polynomial_roots(coeffs, dps: int = 60):
    """Roots of a polynomial given low-to-high, by simultaneous (Durand-Kerner) iteration."""
    with mpmath.workdps(dps):
        eps = mpmath.mpf(10) ** (-(dps - 10))
        c = _trim(list(coeffs), eps)
        low = 0
        while low < len(c) - 1 and abs(c[low]) < eps:
            low += 1
        roots = [mpmath.mpc(0)] * low
        c = c[low:]
        if len(c) > 1:
            roots += list(mpmath.polyroots(list(reversed(c)), maxsteps=400, extraprec=4 * dps))
        return [complex(r) for r in roots]


def critical_points(F: HermanBlaschke, dps: int = 60) -> CriticalSet:
    roots = polynomial_roots(F.critical_polynomial(), dps)
    out = []
    for loc, mult in _cluster(roots, MERGE_TOL):
        if abs(loc) < 1e-12:
            loc = 0j
        on_circle = abs(abs(loc) - 1) < 1e-9
        if on_circle:
            loc = loc / abs(loc)
        out.append(CriticalPoint(loc, mult + 1, on_circle))
    out.append(CriticalPoint(complex("inf"), F.d, False))
    _check_reflection(out)
    return CriticalSet(out)


def _check_reflection(points):
    finite = [c for c in points if cmath.isfinite(c.location)]
    for c in finite:
        if c.location == 0:
            continue
        mirror = 1 / np.conj(c.location)
        if not any(abs(o.location - mirror) < 1e-6 and o.local_degree == c.local_degree for o in finite):
            raise ArithmeticError(f"critical point {c.location} has no reflected partner")


def fixed_points(F: HermanBlaschke, dps: int = 60) -> list[complex]:
    roots = polynomial_roots(F.fixed_point_polynomial(), dps)
    return [0j if abs(r) < 1e-12 else r for r in roots] + [complex("inf")]


@dataclass
class FamilyReport:
    zeros_inside: bool
    unit_lambda: bool
    circle_preserved: bool
    homeomorphism: bool
    rotation_estimate: float | None = None
    rotation_error: float | None = None
    rotation_matches: bool | None = None
    min_orbit_distance_to_critical: float | None = None

    @property
    def ok(self) -> bool:
        flags = [self.zeros_inside, self.unit_lambda, self.circle_preserved, self.homeomorphism]
        if self.rotation_matches is not None:
            flags.append(self.rotation_matches)
        return all(flags)


def validate_family(F: HermanBlaschke, rho: RotationNumber | None = None, tol: float = 1e-8,
                    orbit_checks: int = 100) -> FamilyReport:
    zeros_inside = all(abs(a) < 1 for a in F.zeros)
    unit = abs(abs(F.lam) - 1) < 1e-14
    theta = np.linspace(0, 2 * np.pi, 401)
    try:
        circle = bool(np.max(np.abs(np.abs(F(np.exp(1j * theta))) - 1)) < 1e-10)
    except NearPoleError:
        circle = False
    homeo = False
    report = FamilyReport(zeros_inside, unit, circle, homeo)
    if not zeros_inside:
        return report
    lift = F.circle_lift()
    d = lift.deriv(np.linspace(0, 1, 2001, endpoint=False))
    report.homeomorphism = bool(np.min(d) > -1e-12)
    if rho is not None and unit:
        target = float(value(rho))
        lift = F.circle_lift()
        est = rotation_number(lift, 0.0, rho_hint=_solver_target(rho, tol))
        report.rotation_estimate = est.estimate
        report.rotation_error = est.error
        report.rotation_matches = abs(est.estimate - target) < tol
        report.min_orbit_distance_to_critical = critical_orbit_clearance(F, orbit_checks)
    return report


def critical_orbit_clearance(F: HermanBlaschke, n: int = 100) -> float:
    """Smallest distance from c_k = F^k(1), 1 <= k <= n, to a critical point on the circle."""
    crit = [c.location for c in critical_points(F).points if c.on_circle]
    z = 1 + 0j
    best = math.inf
    for _ in range(n):
        z = F.step(z)
        z /= abs(z)
        best = min(best, min(abs(z - c) for c in crit))
    return best


def _solver_target(rho: RotationNumber, tol: float) -> RotationNumber:
    """Shortest prefix (golden-tail padded if needed) whose last bracket is below tol/10."""
    coeffs = list(rho.coeffs)
    n = 2
    while True:
        ext = RotationNumber(tuple(coeffs[:n]) if n <= len(coeffs) else tuple(coeffs) + (1,) * (n - len(coeffs)))
        t = return_times(ext)
        if t.q[-1] * t.q[-2] * tol > 10:
            return ext
        n += 1


def _compare(lift: CircleMapLift, t, shift: int) -> int:
    """-1, +1 if rot(lift) is below/above the target, 0 if inside the finest bracket."""
    for n in range(2, len(t.q)):
        side = rotation_side(lift, t.p[n] + shift * t.q[n], t.q[n])
        target_side = 1 if n % 2 == 1 else -1
        # convergents alternate around the target: p_n/q_n is below it for odd n
        if side != target_side:
            return side if side != 0 else -target_side
    return 0


def solve_lambda(zeros, d: int, rho: RotationNumber, tol: float = 1e-8,
                 max_steps: int = 80) -> complex:
    """Find lambda on the unit circle whose circle restriction has rotation number value(rho).

    Bisection in t = arg(lambda)/(2 pi); the rotation number of the lift is
    nondecreasing in t and increases by one when t does.
    """
    F0 = HermanBlaschke(d, 1.0, tuple(zeros))
    if any(abs(a) >= 1 for a in F0.zeros):
        raise InvalidZeroConfiguration("zeros must lie inside the unit disk")
    lift0 = F0.circle_lift(0.0)
    grid = np.linspace(0, 1, 4001, endpoint=False)
    if np.min(lift0.deriv(grid)) < -1e-12:
        raise InvalidZeroConfiguration("circle restriction is not a homeomorphism")
    coarse = []
    for t in np.linspace(0.0, 1.0, 17):
        m, x = F0.circle_lift(t).lifted_iterate(0.0, 400)
        coarse.append((m + x) / 400)
    if any(b < a - 2.0 / 400 for a, b in zip(coarse, coarse[1:])):
        raise InvalidZeroConfiguration("rotation number is not monotone in arg(lambda)")
    target = _solver_target(rho, tol)
    times = return_times(target)
    goal = float(value(rho))
    shift = math.floor(goal - coarse[0])
    lo, hi = 0.0, 1.0
    if _compare(F0.circle_lift(lo), times, shift) > 0:
        lo -= 1.0
    if _compare(F0.circle_lift(hi), times, shift) < 0:
        hi += 1.0
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        c = _compare(F0.circle_lift(mid), times, shift)
        if c == 0:
            return cmath.exp(2j * math.pi * mid)
        if c < 0:
            lo = mid
        else:
            hi = mid
    raise ArithmeticError(f"bisection did not isolate rotation number within {max_steps} steps")


def canonical_member(rho: RotationNumber, tol: float = 1e-8) -> HermanBlaschke:
    lam = solve_lambda((1 / 3,), 2, rho, tol)
    return HermanBlaschke.classical(lam)
