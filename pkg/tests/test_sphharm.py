import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lpmv

from hoadoa.errors import DomainError
from hoadoa.sphharm import (
    DEFAULT_GRID,
    Direction,
    GridSpec,
    angular_distance,
    build_grid,
    grid_manifold,
    manifold_vector,
    real_sh,
    sh_matrix,
)

azimuths = st.floats(-180, 179.999, allow_nan=False)
elevations = st.floats(-90, 90, allow_nan=False)
directions = st.builds(Direction, azimuths, elevations)


def oracle_sh(n, m, az_deg, el_deg):
    """Closed form via scipy's associated Legendre (which carries the
    Condon-Shortley phase, removed here) and factorial normalisation."""
    am = abs(m)
    norm = math.sqrt((2 * n + 1) / (4 * math.pi) * (1 if m == 0 else 2) * math.factorial(n - am) / math.factorial(n + am))
    p = (-1) ** am * lpmv(am, n, math.sin(math.radians(el_deg)))
    az = math.radians(az_deg)
    trig = 1.0 if m == 0 else (math.cos(m * az) if m > 0 else math.sin(am * az))
    return norm * p * trig


def test_direction_wraps_azimuth():
    assert Direction(180.0, 0).azimuth == -180.0
    assert Direction(190.0, 10).azimuth == pytest.approx(-170.0)
    assert Direction(-540.0, 0).azimuth == -180.0


@pytest.mark.parametrize("el", [90.0001, -91, float("nan")])
def test_direction_rejects_bad_elevation(el):
    with pytest.raises(DomainError):
        Direction(0, el)


def test_zonal_constants():
    assert real_sh(0, 0, Direction(12, -40)) == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-12)
    assert real_sh(0, 0, Direction(12, -40)) == pytest.approx(0.2820948, abs=1e-7)
    assert real_sh(1, 0, Direction(0, 90)) == pytest.approx(0.4886025, abs=1e-7)


def test_degree4_order3_against_legendre_oracle():
    d = Direction(30, 20)
    # cos(3 * 30 deg) vanishes, so the m = +3 value is zero up to rounding
    assert real_sh(4, 3, d) == pytest.approx(oracle_sh(4, 3, 30, 20), abs=1e-12)
    assert real_sh(4, -3, d) == pytest.approx(0.5023593448254517, rel=1e-12)


@pytest.mark.parametrize("n", range(0, 6))
def test_all_harmonics_match_oracle(n):
    rng = np.random.default_rng(n)
    for az, el in zip(rng.uniform(-180, 180, 5), rng.uniform(-90, 90, 5)):
        for m in range(-n, n + 1):
            assert real_sh(n, m, Direction(az, el)) == pytest.approx(oracle_sh(n, m, az, el), abs=1e-12)


def test_invalid_index():
    with pytest.raises(DomainError):
        real_sh(2, 3, Direction(0, 0))
    with pytest.raises(DomainError):
        real_sh(-1, 0, Direction(0, 0))


def test_manifold_vector_layout():
    d = Direction(-75, 33)
    y = manifold_vector(d, 4)
    assert len(y) == 25
    for n in range(5):
        for m in range(-n, n + 1):
            assert y.values[n * (n + 1) + m] == real_sh(n, m, d)
    np.testing.assert_allclose(manifold_vector(d, 0).values, [0.2820948], atol=1e-7)


def test_manifold_norm_example():
    y = manifold_vector(Direction(45, 0), 4).values
    assert float(y @ y) == pytest.approx(25 / (4 * math.pi), abs=1e-10)
    assert float(y @ y) == pytest.approx(1.98944, abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(directions)
def test_addition_theorem(d):
    Y = sh_matrix(4, d.azimuth, d.elevation)
    for n in range(5):
        block = Y[n * n : (n + 1) ** 2]
        assert float(block @ block) == pytest.approx((2 * n + 1) / (4 * math.pi), abs=1e-10)


def test_orthonormality_monte_carlo():
    rng = np.random.default_rng(0)
    n = 250_000
    az = rng.uniform(-180, 180, n)
    el = np.degrees(np.arcsin(rng.uniform(-1, 1, n)))
    Y = sh_matrix(4, az, el)
    gram = 4 * math.pi * (Y.T @ Y) / n
    np.testing.assert_allclose(gram, np.eye(25), atol=2e-2)


def test_grid_layout():
    grid = build_grid()
    assert len(grid) == 7200
    assert grid[0] == Direction(-178.5, -88.5)
    assert grid[59 * 120 + 119] == Direction(178.5, 88.5)
    assert DEFAULT_GRID.center(0, 0) == grid[0]
    assert len(set(grid)) == 7200


def test_grid_must_tile_sphere():
    with pytest.raises(DomainError):
        GridSpec(60, 100, 3.0)


def test_grid_roundtrip_nearest_cell():
    for k, d in enumerate(build_grid()):
        i, j = DEFAULT_GRID.nearest_cell(d)
        assert DEFAULT_GRID.flat_index(i, j) == k


def test_grid_manifold_columns():
    Y = grid_manifold(4)
    assert Y.shape == (25, 7200)
    d = build_grid()[1234]
    np.testing.assert_allclose(Y[:, 1234], manifold_vector(d, 4).values, atol=1e-14)


def test_angular_distance_examples():
    assert angular_distance(Direction(10, 20), Direction(10, 20)) == 0.0
    assert angular_distance(Direction(0, 0), Direction(90, 0)) == pytest.approx(90.0, abs=1e-12)
    assert angular_distance(Direction(0, 45), Direction(180, 45)) == pytest.approx(90.0, abs=1e-12)
    assert angular_distance(Direction(0, 90), Direction(0, -90)) == pytest.approx(180.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(directions, directions, directions)
def test_angular_distance_metric(a, b, c):
    ab, bc, ac = angular_distance(a, b), angular_distance(b, c), angular_distance(a, c)
    assert 0 <= ab <= 180
    assert ab == pytest.approx(angular_distance(b, a), abs=1e-9)
    assert ac <= ab + bc + 1e-9


@settings(max_examples=100, deadline=None)
@given(directions)
def test_angular_distance_matches_unit_vectors(a):
    b = Direction(a.azimuth + 37, max(-90, min(90, a.elevation - 20)))
    cosang = float(np.clip(a.unit_vector() @ b.unit_vector(), -1, 1))
    assert angular_distance(a, b) == pytest.approx(math.degrees(math.acos(cosang)), abs=1e-6)
