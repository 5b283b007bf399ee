import math

import numpy as np
import pytest
from scipy import integrate

from efimov_kit.errors import ConvergenceError, InvariantError
from efimov_kit.efimov.sobolev import (
    ORDERED_PAIRS,
    count_sobolev,
    cutoff_parameter,
    dilation_prefactor,
    sector_matrix,
    sector_norm_bound,
    sector_symbol,
    sobolev_coefficients,
    sobolev_parameters,
)
from efimov_kit.two_body.determinant import resonant_config

EQUAL = resonant_config((1.0, 1.0, 1.0))
UNEQUAL = resonant_config((1.0, 2.0, 3.0), strict_hypothesis=True)
NODES = 160
ELL_MAX = 20


def test_equal_mass_coefficients():
    model = sobolev_coefficients(EQUAL)
    for pair in ORDERED_PAIRS:
        assert model.u[pair] == pytest.approx(2.0 / math.sqrt(3.0), abs=1e-12)
        assert model.r[pair] == pytest.approx(0.0, abs=1e-15)
        assert model.s[pair] == pytest.approx(0.5)
        assert model.k[pair] == 1


def test_unequal_mass_symmetries():
    model = sobolev_coefficients(UNEQUAL)
    for a, b in ORDERED_PAIRS:
        assert model.u[(a, b)] == pytest.approx(model.u[(b, a)])
        assert model.r[(a, b)] == pytest.approx(-model.r[(b, a)])
        assert 0.0 <= model.s[(a, b)] < 1.0


def test_ratio_reading_is_singular():
    params = sobolev_parameters(EQUAL, reading="ratio")
    assert params[(1, 2)][2] == pytest.approx(2.0)
    with pytest.raises(InvariantError):
        sobolev_coefficients(EQUAL, reading="ratio")
    with pytest.raises(ValueError):
        sobolev_parameters(EQUAL, reading="product")


def test_dilation_prefactor_matches_u():
    for cfg in (EQUAL, UNEQUAL):
        model = sobolev_coefficients(cfg)
        for a, b in ORDERED_PAIRS:
            assert dilation_prefactor(a, b, cfg) == pytest.approx(model.u[(a, b)], rel=1e-12)


def test_resonance_gating():
    model = sobolev_coefficients(EQUAL, resonant=(True, True, False))
    assert model.k[(1, 2)] == 1
    assert model.k[(1, 3)] == 0 and model.k[(3, 2)] == 0
    assert not model.is_zero
    assert sobolev_coefficients(EQUAL, resonant=(True, False, False)).is_zero
    with pytest.raises(ValueError):
        sobolev_coefficients(EQUAL, resonant=(True, True))


def test_model_serializes():
    data = sobolev_coefficients(UNEQUAL).to_dict()
    assert set(data) == {"12", "13", "21", "23", "31", "32", "resonant"}
    assert data["resonant"] == [True, True, True]


def test_s_wave_symbol_closed_form():
    model = sobolev_coefficients(EQUAL)
    y = np.array([0.0, 0.7, 3.0])
    u, s = model.u[(1, 2)], model.s[(1, 2)]
    c = np.cosh(y)
    expected = u / (2.0 * math.pi * s) * np.log((c + s) / (c - s))
    assert np.allclose(sector_symbol(0, 1, 2, model)(y), expected, rtol=1e-10)


def test_higher_sector_symbol_by_quadrature():
    model = sobolev_coefficients(UNEQUAL)
    y = 0.4
    value = integrate.quad(
        lambda t: 2.0 * math.pi * float(model.kernel(2, 3, y, t)) * (1.5 * t * t - 0.5), -1.0, 1.0
    )[0]
    assert float(sector_symbol(2, 2, 3, model)(y)) == pytest.approx(value, rel=1e-10)
    with pytest.raises(ValueError):
        sector_symbol(-1, 1, 2, model)


def test_sector_bounds_decay():
    model = sobolev_coefficients(EQUAL)
    bounds = [sector_norm_bound(ell, model) for ell in (0, 2, 6)]
    assert bounds[0] > 1.0
    assert bounds[0] > bounds[1] > bounds[2]


def test_sector_matrix_is_toeplitz_in_blocks():
    model = sobolev_coefficients(UNEQUAL)
    n = 20
    matrix = sector_matrix(0, 5.0, model, n=n)
    block = matrix[:n, n:2 * n]
    for d in range(-3, 4):
        diagonal = np.diagonal(block, offset=d)
        assert np.allclose(diagonal, diagonal[0])
    assert np.all(matrix[:n, :n] == 0.0)
    assert np.allclose(matrix, matrix.T)


def test_zero_model_counts_nothing():
    model = sobolev_coefficients(EQUAL, resonant=(True, False, False))
    assert count_sobolev(1.0, 30.0, model) == 0


def test_count_rejects_bad_arguments():
    model = sobolev_coefficients(EQUAL)
    with pytest.raises(ValueError):
        count_sobolev(0.0, 10.0, model)
    with pytest.raises(ValueError):
        count_sobolev(1.0, -1.0, model)
    with pytest.raises(ConvergenceError):
        count_sobolev(1.0, 10.0, model, ell_max=0, n=NODES)


def test_cutoff_parameter():
    assert cutoff_parameter(np.zeros(3), -math.exp(-20.0), EQUAL) == pytest.approx(10.0)
    K = np.array([math.sqrt(2.0 * EQUAL.M) * math.exp(-5.0), 0.0, 0.0])
    assert cutoff_parameter(K, 0.0, EQUAL) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        cutoff_parameter(np.zeros(3), 0.0, EQUAL)


@pytest.mark.slow
def test_count_grows_with_cutoff():
    model = sobolev_coefficients(EQUAL)
    counts = [count_sobolev(1.0, r, model, ell_max=ELL_MAX, n=NODES) for r in (10.0, 40.0)]
    assert counts[1] > counts[0]


@pytest.mark.slow
def test_count_independent_of_extra_sectors():
    model = sobolev_coefficients(UNEQUAL)
    base = count_sobolev(1.0, 15.0, model, ell_max=ELL_MAX, n=NODES)
    assert count_sobolev(1.0, 15.0, model, ell_max=ELL_MAX + 5, n=NODES) == base
