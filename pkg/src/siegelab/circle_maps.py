"""Degree-one circle maps: rotation numbers, closest returns, dynamical partitions.

Angles are normalized so that the circle is R/Z and the point ``e^{2 pi i x}``
has angle x. The base point x0 = 0 is the critical point c_0 = 1 of the
canonical Blaschke model.
"""

from __future__ import annotations

import cmath
import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cf_engine import RotationNumber, return_times, value

MEMBERSHIP_TOL = 1e-10


class RotationBudgetExceeded(RuntimeError):
    def __init__(self, msg, estimate, error):
        super().__init__(msg)
        self.estimate = estimate
        self.error = error


class RotationMismatch(ValueError):
    pass


class CriticalPreimage(ValueError):
    pass


class CircleMapLift:
    """A lift x -> g(x) of a degree-one circle map.

    ``scalar`` is a fast float -> float version of ``eval`` used for long
    orbits; it may be omitted for user-supplied maps.
    """

    def __init__(self, eval: Callable, deriv: Callable, kind: str = "user",
                 scalar: Callable | None = None, critical: tuple[float, ...] = ()):
        self.eval = eval
        self.deriv = deriv
        self.kind = kind
        self.scalar = scalar or (lambda x: float(eval(np.float64(x))))
        self.critical = tuple(critical)

    def __call__(self, x):
        return self.eval(x)

    @classmethod
    def rigid(cls, rho: float) -> "CircleMapLift":
        rho = float(rho)
        return cls(lambda x: np.asarray(x) + rho, lambda x: np.ones_like(np.asarray(x, float)),
                   kind="rigid", scalar=lambda x: x + rho)

    def check(self, samples: int = 257, tol: float = 1e-9) -> None:
        x = np.linspace(0.0, 1.0, samples)
        shift = self.eval(x + 1.0) - self.eval(x) - 1.0
        if np.max(np.abs(shift)) > tol:
            raise ValueError(f"lift is not degree one (defect {np.max(np.abs(shift)):.2e})")
        d = self.deriv(x)
        if np.min(d) < -tol:
            raise ValueError("lift is not orientation preserving")

    def orbit(self, x0: float, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer parts and fractional parts of the lifted orbit x_0..x_n."""
        ints = np.empty(n + 1, dtype=np.int64)
        fracs = np.empty(n + 1)
        m = math.floor(x0)
        x = x0 - m
        f = self.scalar
        for k in range(n + 1):
            ints[k] = m
            fracs[k] = x
            y = f(x)
            fy = math.floor(y)
            m += fy
            x = y - fy
        return ints, fracs

    def lifted_iterate(self, x0: float, n: int) -> tuple[int, float]:
        m = math.floor(x0)
        x = x0 - m
        f = self.scalar
        for _ in range(n):
            y = f(x)
            fy = math.floor(y)
            m += fy
            x = y - fy
        return m, x


@dataclass
class RotationEstimate:
    estimate: float
    error: float
    iterations: int


def displacement(lift: CircleMapLift, x0: float, q: int, p: int) -> float:
    """g^q(x0) - x0 - p computed without loss of the fractional part."""
    m, x = lift.lifted_iterate(x0, q)
    m0 = math.floor(x0)
    return (m - m0 - p) + (x - (x0 - m0))


def rotation_side(lift: CircleMapLift, p: int, q: int, x0: float = 0.0) -> int:
    """Sign of rot(lift) - p/q read off a single orbit (0 when x0 is q-periodic)."""
    d = displacement(lift, x0, q, p)
    return (d > 0) - (d < 0)


def rotation_number(lift: CircleMapLift, x0: float = 0.0, rho_hint: RotationNumber | None = None,
                    tol: float = 1e-10, budget: int = 2_000_000) -> RotationEstimate:
    """Estimate the rotation number of a lift.

    With a hint, the orbit is sampled at the closest-return times of the hint
    and the result is certified by comparing with its convergents. Without a
    hint, the plain Birkhoff quotient is refined until the bound 1/n < tol.
    """
    if rho_hint is not None:
        t = return_times(rho_hint)
        usable = [n for n in range(2, len(t.q)) if t.q[n] <= budget]
        if not usable:
            raise RotationBudgetExceeded("hint needs more iterations than budget", float(value(rho_hint)), 1.0)
        lo, hi = -math.inf, math.inf
        for n in usable:
            side = rotation_side(lift, t.p[n], t.q[n], x0)
            conv = t.p[n] / t.q[n]
            if side >= 0:
                lo = max(lo, conv)
            if side <= 0:
                hi = min(hi, conv)
        n = usable[-1]
        m, x = lift.lifted_iterate(x0, t.q[n])
        est = ((m - math.floor(x0)) + (x - (x0 - math.floor(x0)))) / t.q[n]
        err = 1.0 / t.q[n]
        if lo <= hi and math.isfinite(lo) and math.isfinite(hi):
            est = min(max(est, lo), hi)
            err = min(err, hi - lo)
        return RotationEstimate(est, err, t.q[n])
    n = 64
    prev = None
    while True:
        m, x = lift.lifted_iterate(x0, n)
        est = ((m - math.floor(x0)) + (x - (x0 - math.floor(x0)))) / n
        # |g^n(x) - x - n rho| < 1 for every lift of a circle homeomorphism
        if 1.0 / n < tol or (prev is not None and est == prev and est * n == round(est * n)):
            return RotationEstimate(est, 1.0 / n, n)
        if 2 * n > budget:
            raise RotationBudgetExceeded(f"rotation number not resolved to {tol}", est, 1.0 / n)
        prev = est
        n *= 2


@dataclass
class Arc:
    start: float
    length: float
    label: tuple[int, str] = (0, "")

    @property
    def end(self) -> float:
        return self.start + self.length


def closest_return_arcs(lift: CircleMapLift, rho: RotationNumber, x0: float = 0.0,
                        n: int = 10) -> list[Arc]:
    """Closest-return arcs I_1..I_n as oriented arcs from their left endpoints."""
    t = return_times(rho)
    if n + 1 >= len(t.q):
        raise ValueError(f"prefix too short for level {n}")
    top = t.q[n + 1] + t.q[n]
    ints, fracs = lift.orbit(x0, top)
    deltas = [None]
    for k in range(1, n + 2):
        q, p = t.q[k], t.p[k]
        deltas.append((ints[q] - ints[0] - p) + (fracs[q] - fracs[0]))
    arcs = []
    for k in range(1, n + 1):
        d, d_next = deltas[k], deltas[k + 1]
        if k >= 2 and (d * d_next >= 0 or abs(d_next) >= abs(d)):
            raise RotationMismatch(f"closest returns at level {k} do not alternate and shrink")
        start = x0 + min(d, 0.0)
        arcs.append(Arc(start % 1.0, abs(d), (k, f"I_{k}")))
    # first return: g^{q_{k+1}} maps the far endpoint of I_k into I_k u I_{k+1}
    for k in range(2, n):
        q, qn = t.q[k], t.q[k + 1]
        j = q + qn
        pos = (ints[j] - ints[0] - t.p[k] - t.p[k + 1]) + (fracs[j] - fracs[0])
        lo = min(deltas[k], deltas[k + 1])
        hi = max(deltas[k], deltas[k + 1])
        if not lo - 1e-12 <= pos <= hi + 1e-12:
            raise RotationMismatch(f"first-return containment fails at level {k}")
    return arcs


@dataclass
class DynamicalPartition:
    level: int
    arcs: list[Arc] = field(default_factory=list)

    def lengths(self) -> np.ndarray:
        return np.array([a.length for a in self.arcs])

    def to_rows(self):
        for i, a in enumerate(self.arcs):
            yield {"level": self.level, "index": a.label[0], "type": a.label[1],
                   "start": a.start, "end": a.end % 1.0, "length": a.length}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["level", "index", "type", "start", "end", "length"])
            w.writeheader()
            w.writerows(self.to_rows())

    def to_json(self):
        return {"level": self.level, "arcs": list(self.to_rows())}


def dynamical_partition(lift: CircleMapLift, rho: RotationNumber, x0: float = 0.0, n: int = 4,
                        tol: float = 1e-9) -> DynamicalPartition:
    t = return_times(rho)
    if n + 1 >= len(t.q):
        raise ValueError(f"prefix too short for level {n}")
    qn, qn1 = t.q[n], t.q[n + 1]
    ints, fracs = lift.orbit(x0, qn + qn1)
    arcs = []
    for q, p, count, tag in ((qn, t.p[n], qn1, f"I_{n}"), (qn1, t.p[n + 1], qn, f"I_{n + 1}")):
        for i in range(count):
            d = (ints[i + q] - ints[i] - p) + (fracs[i + q] - fracs[i])
            start = fracs[i] + min(d, 0.0)
            arcs.append(Arc(start % 1.0, abs(d), (i, tag)))
    arcs.sort(key=lambda a: a.start)
    for a, b in zip(arcs, arcs[1:] + arcs[:1]):
        gap = (b.start - a.end + 0.5) % 1.0 - 0.5
        if abs(gap) > tol:
            raise ArithmeticError(f"partition at level {n} does not tile (gap {gap:.2e})")
    return DynamicalPartition(n, arcs)


def adjacent_ratio(part: DynamicalPartition) -> float:
    L = part.lengths()
    nxt = np.roll(L, -1)
    return float(np.max(np.maximum(L / nxt, nxt / L)))


@dataclass
class RealBoundsReport:
    K: dict[int, float]
    arc_lengths: dict[int, float]
    slope: float
    intercept: float
    r_squared: float
    mu_low: float
    mu_high: float

    @property
    def decay(self) -> float:
        return math.exp(self.slope)


def verify_real_bounds(lift: CircleMapLift, rho: RotationNumber, n_max: int = 10,
                       x0: float = 0.0) -> RealBoundsReport:
    if n_max < 3:
        raise ValueError("n_max must be at least 3")
    K = {n: adjacent_ratio(dynamical_partition(lift, rho, x0, n)) for n in range(1, n_max + 1)}
    arcs = closest_return_arcs(lift, rho, x0, n_max)
    lengths = {a.label[0]: a.length for a in arcs}
    ns = np.arange(3, n_max + 1)
    logs = np.log([lengths[n] for n in ns])
    slope, intercept = np.polyfit(ns, logs, 1)
    resid = logs - (slope * ns + intercept)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    ratios = [lengths[n + 1] / lengths[n] for n in range(1, n_max)]
    return RealBoundsReport(K, lengths, float(slope), float(intercept), r2, min(ratios), max(ratios))


# Rotation coordinates. The combinatorics of the orbit of c_0 depends only on
# rho, so addresses are computed on the rigid model, where ξ_s sits at s.

def _signed(x: float) -> float:
    return (x + 0.5) % 1.0 - 0.5


class RotationArcs:
    def __init__(self, rho: RotationNumber):
        self.rho = rho
        self.value = float(value(rho))
        self.times = return_times(rho)

    def pos(self, k: int) -> float:
        """Signed offset of c_k from c_0."""
        return _signed(k * self.value)

    def arc(self, i: int, j: int) -> tuple[float, float]:
        a, b = self.pos(i), self.pos(j)
        return (a, b) if a <= b else (b, a)

    def j_minus(self, n: int) -> tuple[float, float]:
        q = self.times.q
        return self.arc(-q[n], -q[n + 1])

    def i_minus(self, n: int) -> tuple[float, float]:
        return self.arc(0, -self.times.q[n])


def _strictly_in(x: float, arc: tuple[float, float], tol: float = MEMBERSHIP_TOL) -> bool:
    return arc[0] + tol < x < arc[1] - tol


@dataclass
class CombinatorialAddress:
    base: int
    pairs: list[tuple[int, int]]

    def to_json(self):
        return [list(p) for p in self.pairs]

    @classmethod
    def from_json(cls, base, data):
        return cls(base, [tuple(p) for p in data])

    def shift(self, rho: RotationNumber) -> int:
        """Total number of forward iterates encoded by g^{Sigma}."""
        q = return_times(rho).q
        total = 0
        for i, (alpha, beta) in enumerate(self.pairs):
            k = self.base + 1 + i
            total += alpha * q[k] + beta * q[k - 1]
        return total


def address_candidates(geo: RotationArcs, s: float, n: int) -> list[tuple[tuple[int, int], float]]:
    """All pairs (alpha, beta) whose inverse branch carries s from J-_n into J-_{n+1}.

    The branch g_k = g^{-q_k} is only defined on I-_{k-1}, so its inverse applies
    to points of g^{-q_k}(I-_{k-1}).
    """
    q = geo.times.q
    a_next = geo.rho.a(n + 1)
    target = geo.j_minus(n + 1)
    hits = []
    for beta in (0, 1):
        for alpha in range(a_next):
            x = s
            ok = True
            # invert g^{sigma} = g_{n+1}^alpha o g_n^beta: undo g_{n+1} first
            for k, times in ((n + 1, alpha), (n, beta)):
                for _ in range(times):
                    dom = geo.i_minus(k - 1)
                    image = (_signed(dom[0] - q[k] * geo.value), _signed(dom[1] - q[k] * geo.value))
                    lo, hi = min(image), max(image)
                    if not lo - MEMBERSHIP_TOL <= x <= hi + MEMBERSHIP_TOL:
                        ok = False
                        break
                    x = _signed(x + q[k] * geo.value)
                if not ok:
                    break
            if ok and _strictly_in(x, target):
                hits.append(((alpha, beta), x))
    return hits


def combinatorial_address(lift: CircleMapLift | None, rho: RotationNumber, s: float, n: int,
                          m: int) -> CombinatorialAddress:
    """The (n, m) combinatorial address of the rotation coordinate s."""
    geo = RotationArcs(rho)
    s = _signed(s)
    if not _strictly_in(s, geo.j_minus(n)):
        raise ValueError(f"s = {s} is not inside J-_{n}")
    pairs = []
    x = s
    for k in range(n, n + m):
        if min(abs(_signed(x - geo.pos(-j))) for j in range(0, geo.times.q[min(k + 2, len(geo.times.q) - 1)] + 1)) < MEMBERSHIP_TOL:
            raise CriticalPreimage(f"s is an iterated preimage of the critical angle (level {k})")
        hits = address_candidates(geo, x, k)
        if len(hits) != 1:
            raise CriticalPreimage(f"address of s at level {k} is not unique ({len(hits)} candidates)")
        pair, x = hits[0]
        pairs.append(pair)
    return CombinatorialAddress(n, pairs)


def pull_back_by_address(rho: RotationNumber, s: float, address: CombinatorialAddress) -> float:
    """Rotation coordinate of g^{-Sigma}(ξ_s)."""
    geo = RotationArcs(rho)
    return _signed(s + address.shift(rho) * geo.value)
