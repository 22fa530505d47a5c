"""Continued fractions, closest-return times and their growth inequalities.

A rotation number is stored as a finite prefix ``[a_1, ..., a_N]`` of its
continued fraction. Convergent denominators follow the shifted convention
``q_0 = 0, q_1 = 1, q_n = a_{n-1} q_{n-1} + q_{n-2}`` so that ``q_n`` is the
n-th closest-return time of the rotation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
import mpmath

RATIONAL_CUTOFF = 10**12
DEFAULT_DEPTH = 30


class RationalInputError(ValueError):
    pass


@dataclass(frozen=True)
class RotationNumber:
    coeffs: tuple[int, ...]
    bound: int | None = None

    def __post_init__(self):
        coeffs = tuple(int(a) for a in self.coeffs)
        if not coeffs:
            raise ValueError("need at least one partial quotient")
        if any(a < 1 for a in coeffs):
            raise ValueError(f"partial quotients must be positive: {coeffs}")
        if self.bound is not None and max(coeffs) > self.bound:
            raise ValueError(f"partial quotient exceeds bound {self.bound}")
        object.__setattr__(self, "coeffs", coeffs)

    def __len__(self):
        return len(self.coeffs)

    @classmethod
    def golden(cls, length: int = 20) -> "RotationNumber":
        return cls((1,) * length, bound=1)

    @classmethod
    def silver(cls, length: int = 20) -> "RotationNumber":
        return cls((2,) * length, bound=2)

    def a(self, n: int) -> int:
        """Partial quotient a_n (1-based)."""
        return self.coeffs[n - 1]

    def extended(self, length: int, tail: int = 1) -> "RotationNumber":
        """Pad the prefix with a constant tail up to ``length`` quotients."""
        extra = max(0, length - len(self.coeffs))
        return RotationNumber(self.coeffs + (tail,) * extra)

    def to_json(self):
        return {"coeffs": list(self.coeffs), "bound": self.bound}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, list):
            return cls(tuple(data))
        return cls(tuple(data["coeffs"]), data.get("bound"))


def value(rho: RotationNumber, dps: int = 50) -> mpmath.mpf:
    """[0; a_1, ..., a_N] evaluated in extended precision."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(0)
        for a in reversed(rho.coeffs):
            x = 1 / (a + x)
        return +x


def value_exact(rho: RotationNumber) -> Fraction:
    x = Fraction(0)
    for a in reversed(rho.coeffs):
        x = 1 / (a + x)
    return x


def cf_expand(x, depth: int = DEFAULT_DEPTH, dps: int = 60) -> RotationNumber:
    """Expand x in (0, 1) into ``depth`` partial quotients.

    Raises RationalInputError when the expansion terminates or a quotient
    exceeds 1e12 before ``depth`` quotients are produced.
    """
    if isinstance(x, Fraction):
        return _expand_fraction(x, depth)
    with mpmath.workdps(dps):
        y = mpmath.mpf(x) if not isinstance(x, str) else mpmath.mpf(x)
        if not 0 < y < 1:
            raise ValueError(f"expected 0 < x < 1, got {x}")
        coeffs = []
        floor_eps = mpmath.mpf(10) ** (-(dps - 10))
        for _ in range(depth):
            if y < floor_eps:
                raise RationalInputError(f"expansion of {x} terminates after {len(coeffs)} terms")
            inv = 1 / y
            a = int(mpmath.floor(inv))
            if a > RATIONAL_CUTOFF:
                raise RationalInputError(f"partial quotient {a} after {len(coeffs)} terms")
            coeffs.append(a)
            y = inv - a
        return RotationNumber(tuple(coeffs))


def _expand_fraction(x: Fraction, depth: int) -> RotationNumber:
    if not 0 < x < 1:
        raise ValueError(f"expected 0 < x < 1, got {x}")
    coeffs = []
    for _ in range(depth):
        if x == 0:
            raise RationalInputError(f"expansion terminates after {len(coeffs)} terms")
        inv = 1 / x
        a = inv.numerator // inv.denominator
        if a > RATIONAL_CUTOFF:
            raise RationalInputError(f"partial quotient {a} after {len(coeffs)} terms")
        coeffs.append(a)
        x = inv - a
    return RotationNumber(tuple(coeffs))


def is_bounded_type(rho: RotationNumber, bound: int) -> bool:
    return max(rho.coeffs) <= bound


@dataclass
class ReturnTimes:
    """Sequences q, p (indices 0..N), r and cumulative R (indices 0..N-1)."""

    q: list[int]
    p: list[int]
    r: list[int] = field(default_factory=list)
    R: list[int] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.r) - 1

    def to_json(self):
        return {"q": self.q, "p": self.p, "r": self.r, "R": self.R}

    @classmethod
    def from_json(cls, data):
        return cls(list(data["q"]), list(data["p"]), list(data["r"]), list(data["R"]))


def return_times(rho: RotationNumber) -> ReturnTimes:
    n_max = len(rho)
    q = [0, 1]
    p = [1, 0]
    for n in range(2, n_max + 1):
        a = rho.a(n - 1)
        q.append(a * q[-1] + q[-2])
        p.append(a * p[-1] + p[-2])
    r = [q[n] + q[n + 1] for n in range(n_max)]
    R = [0]
    for n in range(1, n_max):
        R.append(R[-1] + r[n])
    return ReturnTimes(q, p, r, R)


def save_return_times(times: ReturnTimes, path) -> None:
    with open(path, "w") as fh:
        json.dump(times.to_json(), fh, indent=1)


def load_return_times(path) -> ReturnTimes:
    with open(path) as fh:
        return ReturnTimes.from_json(json.load(fh))


@dataclass
class ClauseCheck:
    clause: str
    n: int
    lhs: int
    rhs: int
    holds: bool
    equality_predicted: bool | None = None

    @property
    def ok(self) -> bool:
        if not self.holds:
            return False
        if self.equality_predicted is None:
            return True
        return self.equality_predicted == (self.lhs == self.rhs)


@dataclass
class LemmaReport:
    checks: list[ClauseCheck]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[ClauseCheck]:
        return [c for c in self.checks if not c.ok]

    def clauses(self) -> dict[str, bool]:
        out: dict[str, bool] = {}
        for c in self.checks:
            out[c.clause] = out.get(c.clause, True) and c.ok
        return out


def verify_growth_lemmas(rho: RotationNumber, n_max: int | None = None) -> LemmaReport:
    """Check the four return-time growth inequalities and their equality cases for n >= 3."""
    t = return_times(rho)
    N = len(rho)
    a = rho.a
    # clause (iii) needs r_{n+1}, the last available index
    top = N - 2 if n_max is None else min(n_max, N - 2)
    checks = []
    for n in range(3, top + 1):
        checks.append(ClauseCheck("i", n, t.q[n], t.r[n - 2], t.q[n] >= t.r[n - 2], a(n - 1) == 1))
        lhs = t.q[n + 1]
        rhs = t.r[n - 2] + t.r[n - 3]
        eq = a(n) == a(n - 1) == a(n - 2) == 1
        checks.append(ClauseCheck("ii", n, lhs, rhs, lhs >= rhs, eq))
        lhs = t.R[n - 2]
        rhs = t.R[n] - t.r[n + 1]
        eq = a(n + 1) == a(n) == 1
        checks.append(ClauseCheck("iii", n, lhs, rhs, lhs >= rhs, eq))
        checks.append(ClauseCheck("iv", n, t.r[n], t.R[n - 2], t.r[n] > t.R[n - 2]))
    return LemmaReport(checks)


# Arcs on the circle in rotation coordinates. Orbit points c_k sit at {k rho};
# with rho replaced by the last convergent P/Q every offset becomes the integer
# k*P mod Q, so containments reduce to integer comparisons.

class OrbitOffsets:
    def __init__(self, rho: RotationNumber):
        exact = value_exact(rho)
        self.P = exact.numerator
        self.Q = exact.denominator
        self.times = return_times(rho)

    def offset(self, k: int) -> int:
        """Signed position of c_k relative to c_0, scaled by Q, in (-Q/2, Q/2]."""
        v = (k * self.P) % self.Q
        if 2 * v > self.Q:
            v -= self.Q
        return v

    def arc(self, i: int, j: int) -> tuple[int, int]:
        """The short arc (c_i, c_j) containing c_0, as an ordered integer interval."""
        a, b = self.offset(i), self.offset(j)
        if a > b:
            a, b = b, a
        if not a < 0 < b and not (a == 0 or b == 0):
            raise ValueError(f"arc ({i}, {j}) does not surround c_0")
        return a, b


def _inside(inner, outer, strict):
    if strict:
        return outer[0] < inner[0] and inner[1] < outer[1]
    return outer[0] <= inner[0] and inner[1] <= outer[1]


@dataclass
class ArcCheck:
    n: int
    relation: str
    holds: bool


def verify_nested_arcs(rho: RotationNumber, n_max: int | None = None) -> list[ArcCheck]:
    """Exact checks of J+_n inside J-_{n-1} inside J-_{n-2} and of the pulled-back arc."""
    orb = OrbitOffsets(rho)
    q, r = orb.times.q, orb.times.r
    # keep every index well below Q so the rational surrogate is faithful
    top = len(rho) - 4 if n_max is None else min(n_max, len(rho) - 4)
    out = []
    # J-_1 degenerates to a point when a_1 = 1, so start where J-_{n-2} is a genuine arc
    for n in range(4, top + 1):
        j_plus = orb.arc(q[n], q[n + 1])
        j_minus_n = orb.arc(-q[n], -q[n + 1])
        j1 = orb.arc(-q[n - 1], -q[n])
        j2 = orb.arc(-q[n - 2], -q[n - 1])
        pulled = orb.arc(-q[n - 1] - r[n], -q[n] - r[n])
        out.append(ArcCheck(n, "J+_n compactly inside J-_{n-1}", _inside(j_plus, j1, True)))
        out.append(ArcCheck(n, "J-_{n-1} inside J-_{n-2}", _inside(j1, j2, False)))
        out.append(ArcCheck(n, "J-_n compactly inside pullback", _inside(j_minus_n, pulled, True)))
        out.append(ArcCheck(n, "pullback compactly inside J-_{n-2}", _inside(pulled, j2, True)))
    return out


def convergents(rho: RotationNumber) -> list[Fraction]:
    t = return_times(rho)
    return [Fraction(t.p[n], t.q[n]) for n in range(1, len(t.q))] + [value_exact(rho)]
