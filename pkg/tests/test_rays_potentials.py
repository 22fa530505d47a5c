import math

import mpmath
import numpy as np
import pytest
from shapely.geometry import Polygon

from siegelab.rays_potentials import (NotInBasin, PowerMap, basin_grid, check_equivariance, equipotential,
                                      external_angle, green_potential, internal_ray, trace_external_ray,
                                      trace_rays)


def test_power_map_potential_is_log_modulus():
    z = np.array([1.5, 2 + 3j, -4j, 0.3 + 1.2j])
    assert np.allclose(green_potential(PowerMap(2), z), np.log(np.abs(z)), atol=1e-12)
    assert green_potential(PowerMap(3), 2.0) == pytest.approx(math.log(2.0), abs=1e-12)


def test_potential_functional_equation(classical):
    rng = np.random.default_rng(1)
    z = 2.5 * np.exp(2j * math.pi * rng.random(100)) * (1 + rng.random(100))
    g = green_potential(classical, z)
    escaping = np.isfinite(g)  # some samples land on preimages of the disk
    assert escaping.sum() >= 50
    z, g = z[escaping], g[escaping]
    assert np.max(np.abs(green_potential(classical, classical(z)) - 2 * g)) < 1e-12


def test_potential_at_ten_matches_direct_limit(classical):
    # oracle: iterate 60 times in extended precision and take 2^-60 log|F^60(10)|
    with mpmath.workdps(60):
        lam = mpmath.mpc(classical.lam.real, classical.lam.imag)
        a = mpmath.mpf(1) / 3
        z = mpmath.mpc(10)
        for _ in range(60):
            z = lam * z**2 * (1 - a * z) / (z - a)
        direct = float(mpmath.log(abs(z)) / mpmath.mpf(2) ** 60)
    assert green_potential(classical, 10.0) == pytest.approx(direct, abs=1e-9)
    # leading terms: log|z| + log|lambda a| + (1/2) log|(z - 3)/(z - 1/3)|
    leading = math.log(10) + math.log(1 / 3) + 0.5 * math.log(7 / (10 - 1 / 3))
    assert green_potential(classical, 10.0) == pytest.approx(leading, abs=0.05)


def test_non_escaping_point_rejected(classical):
    with pytest.raises(NotInBasin):
        green_potential(classical, 1.0, max_iter=500)  # the circle is invariant


def test_square_ray_zero_is_real():
    ray = trace_external_ray(PowerMap(2), 0.0, depth=20)
    assert np.max(np.abs(ray.points.imag)) < 1e-10
    assert np.all(ray.points.real > 1)


@pytest.mark.parametrize("t", [0.1, 0.3, 0.77])
def test_square_rays_land_on_circle(t):
    ray = trace_external_ray(PowerMap(2), t, depth=40)
    assert ray.landing is not None
    assert abs(ray.landing[0] - np.exp(2j * math.pi * t)) < 1e-6


def test_classical_fixed_ray_lands(classical):
    ray = trace_external_ray(classical, 0.0, depth=40)
    assert ray.tail_diameter() < 1e-6
    assert ray.landing is not None
    # landing point of a fixed ray is fixed
    z = ray.landing[0]
    assert abs(classical(z) - z) < 1e-5


def test_ray_points_have_their_potential(classical):
    ray = trace_external_ray(classical, 0.3, depth=10)
    g = green_potential(classical, ray.points)
    assert np.max(np.abs(g - ray.potentials)) < 1e-9
    assert abs(external_angle(classical, ray.points[20]) - 0.3) < 1e-9


def test_square_equipotential_is_circle():
    eq = equipotential(PowerMap(2), 2.0, 128)
    assert np.allclose(np.abs(eq.points), 2.0, atol=1e-12)
    assert eq.winding_number() == 1


def test_equipotential_pushforward(classical):
    eq = equipotential(classical, 1.5, 256)
    assert np.max(np.abs(green_potential(classical, classical(eq.points)) - 2 * math.log(1.5))) < 1e-7


def test_equipotentials_nested(classical):
    outer = Polygon([(z.real, z.imag) for z in equipotential(classical, 2.0, 512).points])
    inner = Polygon([(z.real, z.imag) for z in equipotential(classical, 2 ** 0.5, 512).points])
    assert outer.is_valid and inner.is_valid
    assert outer.contains(inner)
    assert not outer.exterior.intersects(inner.exterior)


def test_reflected_square_ray():
    ray = internal_ray(PowerMap(2), 0.0, depth=20)
    assert np.all(np.abs(ray.points) < 1)
    assert np.max(np.abs(ray.points.imag)) < 1e-10
    assert np.all((ray.points.real > 0) & (ray.points.real < 1))


def test_internal_landing_is_reflection(classical):
    ext = trace_external_ray(classical, 0.0, depth=40)
    inn = internal_ray(classical, 0.0, depth=40)
    assert np.all(np.abs(inn.points) < 1)
    w = inn.landing[0]
    assert abs(w - 1 / np.conj(ext.landing[0])) < 1e-12
    # reflection of a fixed point is fixed
    assert abs(classical(w) - w) < 1e-6


def test_equivariance_report(classical):
    rays = trace_rays(classical, np.arange(16) / 16, depth=12)
    eqs = [equipotential(classical, 2.0, 64)]
    rep = check_equivariance(classical, rays, eqs)
    assert rep.potential_defect < 1e-7
    assert rep.ray_mismatch < 1e-6
    assert rep.samples == sum(r.points.size for r in rays) + 64


def test_basin_grid_disk_interior_not_escaping(classical):
    Z = np.array([0.0, 0.5j, -0.3 + 0.2j, 10.0, 1.0])
    g = basin_grid(classical, Z, 100)
    assert list(g.kind[:3]) == [1, 1, 1]
    assert g.kind[3] == 0 and g.escaped[3]
