import cmath
import math

import mpmath
import numpy as np
import pytest

from siegelab.blaschke_family import (HermanBlaschke, InvalidZeroConfiguration, NearPoleError, critical_points,
                                      fixed_points, load_registry, save_registry, solve_lambda, validate_family)
from siegelab.cf_engine import RotationNumber, value
from siegelab.circle_maps import rotation_number


def mp_classical(lam, z):
    """The classical member evaluated term by term in extended precision."""
    a = mpmath.mpf(1) / 3
    return lam * z**2 * (1 - a * z) / (z - a)


@pytest.mark.parametrize("lam", [1.0, 1j, cmath.exp(2.1j)])
def test_classical_maps_one_to_lambda(lam):
    # (1 - 1/3)/(1 - 1/3) = 1, so F(1) = lambda
    assert HermanBlaschke.classical(lam)(1.0) == pytest.approx(lam, abs=1e-15)


def test_circle_preserved(classical):
    rng = np.random.default_rng(0)
    z = np.exp(2j * math.pi * rng.random(100))
    assert np.max(np.abs(np.abs(classical(z)) - 1)) < 1e-14


def test_origin_fixed():
    F = HermanBlaschke(3, cmath.exp(0.4j), (0.2 + 0.1j, -0.3j))
    assert F(0.0) == 0


def test_pole_guard():
    with pytest.raises(NearPoleError):
        HermanBlaschke.classical()(1 / 3)


def test_wrong_zero_count():
    with pytest.raises(ValueError):
        HermanBlaschke(3, 1.0, (0.2,))


def test_solved_member_validates(classical, golden):
    rep = validate_family(classical, RotationNumber.golden(20))
    assert rep.ok
    assert rep.rotation_error < 1e-8


def test_zero_outside_disk_fails_validation():
    rep = validate_family(HermanBlaschke(2, 1.0, (1.1,)))
    assert not rep.zeros_inside and not rep.ok


def test_non_unit_lambda_fails_validation():
    rep = validate_family(HermanBlaschke.classical(2.0))
    assert not rep.unit_lambda and not rep.ok


def test_solver_rejects_outside_zero():
    with pytest.raises(InvalidZeroConfiguration):
        solve_lambda((1.2,), 2, RotationNumber.golden(20))


def test_zero_rotation_not_representable():
    with pytest.raises(ValueError):
        RotationNumber((0,))


def test_golden_lambda_by_plain_birkhoff(classical):
    # independent of the convergent bracketing: plain orbit average over 2^21 steps
    est = rotation_number(classical.circle_lift(), tol=1e-6)
    assert abs(est.estimate - float(value(RotationNumber.golden(20)))) < 1e-6
    hinted = rotation_number(classical.circle_lift(), rho_hint=RotationNumber.golden(30))
    assert abs(hinted.estimate - float(value(RotationNumber.golden(30)))) < 1e-8


def test_silver_lambda_converges():
    rho = RotationNumber.silver(20)
    F = HermanBlaschke.classical(solve_lambda((1 / 3,), 2, rho, 1e-8))
    rep = validate_family(F, rho)
    assert rep.rotation_matches
    assert abs(rotation_number(F.circle_lift(), tol=1e-6).estimate - float(value(rho))) < 1e-6


def test_cubic_critical_point_at_one(classical):
    crit = critical_points(classical).near(1 + 0j, 1e-8)
    assert crit is not None and crit.local_degree == 3 and crit.on_circle
    # oracle: first two derivatives vanish at 1, the third does not
    with mpmath.workdps(40):
        lam = mpmath.mpc(classical.lam.real, classical.lam.imag)
        d1, d2, d3 = (mpmath.diff(lambda z: mp_classical(lam, z), 1, k) for k in (1, 2, 3))
    assert abs(d1) < 1e-30 and abs(d2) < 1e-30 and abs(d3) > 0.1


def test_critical_points_zero_and_infinity(classical):
    pts = critical_points(classical).points
    assert any(c.location == 0 and c.local_degree == 2 for c in pts)
    assert any(cmath.isinf(c.location) and c.local_degree == 2 for c in pts)


def test_critical_set_reflection_symmetric():
    F = HermanBlaschke(3, cmath.exp(1.3j), (0.3 + 0.2j, -0.25 + 0.1j))
    finite = [c.location for c in critical_points(F).finite() if c.location != 0]
    for c in finite:
        assert min(abs(o - 1 / c.conjugate()) for o in finite) < 1e-8


def test_fixed_points_are_fixed(classical):
    for z in fixed_points(classical):
        if cmath.isfinite(z) and z != 0:
            assert abs(classical(z) - z) < 1e-10 * max(1, abs(z))


def test_registry_round_trip(tmp_path, classical):
    save_registry([classical, HermanBlaschke.classical()], tmp_path / "reg.jsonl")
    assert load_registry(tmp_path / "reg.jsonl") == [classical, HermanBlaschke.classical()]


def test_derivative_matches_finite_difference(classical):
    z = np.array([0.7 + 0.9j, 2.0 - 1.0j, -0.4 + 0.1j])
    h = 1e-6
    fd = (classical(z + h) - classical(z - h)) / (2 * h)
    assert np.allclose(classical.derivative(z), fd, atol=1e-6)
