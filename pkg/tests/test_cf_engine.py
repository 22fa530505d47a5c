import random
from fractions import Fraction

import mpmath
import pytest

from siegelab.cf_engine import (RationalInputError, RotationNumber, cf_expand, convergents, is_bounded_type,
                                load_return_times, return_times, save_return_times, value, value_exact,
                                verify_growth_lemmas, verify_nested_arcs)


def finite_fraction(coeffs):
    x = Fraction(0)
    for a in reversed(coeffs):
        x = 1 / (a + x)
    return x


def test_golden_expansion_all_ones():
    x = (mpmath.sqrt(5) - 1) / 2
    assert cf_expand(x, 6).coeffs == (1,) * 6


def test_rational_input_rejected():
    with pytest.raises(RationalInputError):
        cf_expand(Fraction(1, 3), 4)
    with pytest.raises(RationalInputError):
        cf_expand(mpmath.mpf(1) / 3, 4)


def test_silver_expansion_matches_value():
    x = mpmath.sqrt(2) - 1
    coeffs = cf_expand(x, 5).coeffs
    assert coeffs == (2,) * 5
    # a depth-5 convergent is only within 1/(q_5 q_6) = 1/(29*70); 1e-6 needs depth 9
    assert abs(float(finite_fraction(coeffs)) - (2**0.5 - 1)) < 1 / (29 * 70)
    deeper = cf_expand(x, 9).coeffs
    assert deeper[:5] == coeffs
    assert abs(float(finite_fraction(deeper)) - (2**0.5 - 1)) < 1e-6


def test_value_agrees_with_exact_fraction():
    rho = RotationNumber((3, 1, 4, 1, 5, 9, 2, 6))
    assert value_exact(rho) == finite_fraction(rho.coeffs)
    exact = finite_fraction(rho.coeffs)
    with mpmath.workdps(50):
        assert abs(value(rho) - mpmath.mpf(exact.numerator) / exact.denominator) < mpmath.mpf(10) ** -40


def test_rotation_number_validation():
    with pytest.raises(ValueError):
        RotationNumber(())
    with pytest.raises(ValueError):
        RotationNumber((1, 0, 2))
    with pytest.raises(ValueError):
        RotationNumber((1, 3), bound=2)


def test_golden_return_times_are_fibonacci():
    t = return_times(RotationNumber((1,) * 5))
    assert t.q == [0, 1, 1, 2, 3, 5]


def test_golden_r_values():
    t = return_times(RotationNumber((1,) * 6))
    assert t.r[2] == t.q[2] + t.q[3] == 3
    assert t.r[3] == 5


def test_silver_return_times():
    t = return_times(RotationNumber((2,) * 5))
    # hand recurrence q_{n+1} = 2 q_n + q_{n-1} from q_0 = 0, q_1 = 1
    expected = [0, 1]
    for _ in range(4):
        expected.append(2 * expected[-1] + expected[-2])
    assert t.q == expected == [0, 1, 2, 5, 12, 29]


def test_cumulative_return_times():
    t = return_times(RotationNumber((1, 2, 1, 3, 1, 1, 2)))
    # cumulative sum starts at index 1, so R_0 is the empty sum
    assert t.R == [sum(t.r[1: k + 1]) for k in range(len(t.r))]


def test_convergents_are_p_over_q():
    rho = RotationNumber((2, 3, 1, 4))
    t = return_times(rho)
    assert convergents(rho)[-1] == value_exact(rho)
    assert all(Fraction(t.p[n], t.q[n]) in convergents(rho) for n in range(2, len(t.q)))


def test_return_times_round_trip(tmp_path):
    t = return_times(RotationNumber.golden(12))
    save_return_times(t, tmp_path / "t.json")
    assert load_return_times(tmp_path / "t.json") == t


def test_golden_clause_i_equality():
    rep = verify_growth_lemmas(RotationNumber.golden(20))
    clause_i = [c for c in rep.checks if c.clause == "i"]
    assert clause_i and all(c.lhs == c.rhs for c in clause_i)
    assert rep.ok


def test_silver_clause_i_strict():
    rep = verify_growth_lemmas(RotationNumber.silver(20))
    clause_i = [c for c in rep.checks if c.clause == "i"]
    # q_n against r_{n-2} = q_{n-2} + q_{n-1}, recomputed by hand
    q = [0, 1]
    for _ in range(20):
        q.append(2 * q[-1] + q[-2])
    for c in clause_i:
        assert c.lhs == q[c.n] and c.rhs == q[c.n - 2] + q[c.n - 1]
        assert c.lhs > c.rhs


def test_clause_iv_holds_for_random_prefixes():
    rng = random.Random(3)
    for _ in range(50):
        rho = RotationNumber(tuple(rng.randint(1, 6) for _ in range(15)))
        rep = verify_growth_lemmas(rho)
        assert all(c.holds for c in rep.checks if c.clause == "iv")
        assert rep.ok


def test_nested_arcs_hold():
    for rho in (RotationNumber.golden(20), RotationNumber.silver(20), RotationNumber((1, 3, 2, 1, 4, 1, 1, 2) * 3)):
        assert all(a.holds for a in verify_nested_arcs(rho))


@pytest.mark.parametrize("coeffs,bound,expected", [((1, 1, 1), 1, True), ((1, 3, 1), 2, False),
                                                   ((2, 2, 2), 2, True)])
def test_bounded_type(coeffs, bound, expected):
    assert is_bounded_type(RotationNumber(coeffs), bound) is expected
