import math

import numpy as np
import pytest

from efimov_kit.efimov.batch import agreement_ratio
from efimov_kit.efimov.slopes import ROUTE_FACTORS, SlopeFit, estimate_U, fit_counting_slopes
from efimov_kit.efimov.sobolev import cutoff_parameter, sobolev_coefficients
from efimov_kit.three_body.faddeev import GridSpec
from efimov_kit.two_body.branch import clear_branch_cache, tabulate_branch
from efimov_kit.two_body.determinant import resonant_config

EQUAL = resonant_config((1.0, 1.0, 1.0))
R_LADDER = (10.0, 15.0, 20.0, 30.0, 40.0)
Z_LADDER = (-1e-1, -1e-2, -1e-3, -1e-4, -1e-5)
K_LADDER = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
TINY = GridSpec(nodes_per_decade=1.0, n_core=1, n_polar=2, n_azimuth=2, n_far=3)


def test_slope_fit_recovers_line():
    fit = SlopeFit.fit("energy", [1.0, 2.0, 3.0, 4.0], [3, 5, 7, 9])
    assert fit.slope == pytest.approx(2.0)
    assert fit.intercept == pytest.approx(1.0)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit.estimate == pytest.approx(2.0)


def test_slope_fit_route_factor():
    fit = SlopeFit.fit("sobolev", [10.0, 15.0, 20.0, 30.0], [2, 3, 4, 6])
    assert fit.factor == ROUTE_FACTORS["sobolev"] == 0.5
    assert fit.estimate == pytest.approx(0.5 * fit.slope)
    rows = fit.rows()
    assert len(rows) == 4
    assert rows[0]["route"] == "sobolev"
    assert rows[-1]["count"] == 6


def test_slope_fit_validation():
    with pytest.raises(ValueError):
        SlopeFit.fit("energy", [1.0, 2.0, 3.0], [1, 2, 3])
    with pytest.raises(ValueError):
        SlopeFit.fit("energy", [1.0, 3.0, 2.0, 4.0], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        SlopeFit.fit("volume", [1.0, 2.0, 3.0, 4.0], [1, 2, 3, 4])


def test_agreement_ratio():
    assert agreement_ratio(1.1, 1.0) == pytest.approx(1.1)
    assert agreement_ratio(1.0, 0.0) is None


def test_estimate_U_rejects_short_ladder():
    model = sobolev_coefficients(EQUAL)
    with pytest.raises(ValueError):
        estimate_U(1.0, model, r_ladder=(10.0, 12.0, 14.0, 16.0))


def test_estimate_U_zero_model():
    model = sobolev_coefficients(EQUAL, resonant=(True, False, False))
    fit = estimate_U(1.0, model, r_ladder=R_LADDER)
    assert fit.estimate == 0.0
    assert fit.counts == (0, 0, 0, 0, 0)


@pytest.mark.slow
def test_estimate_U_positive_for_equal_masses():
    model = sobolev_coefficients(EQUAL)
    fit = estimate_U(1.0, model, r_ladder=R_LADDER, ell_max=20, n=160)
    assert fit.estimate > 0.0


@pytest.fixture(scope="module")
def equal_branches():
    clear_branch_cache()
    return {a: tabulate_branch(a, EQUAL, resolution=9) for a in (1, 2, 3)}


def test_cutoff_abscissae_are_logarithmic():
    for z in Z_LADDER:
        assert 2.0 * cutoff_parameter(np.zeros(3), z, EQUAL) == pytest.approx(abs(math.log(-z)))
    shift = math.log(2.0 * EQUAL.M)
    for k in K_LADDER:
        K = np.array([k, 0.0, 0.0])
        assert 2.0 * cutoff_parameter(K, 0.0, EQUAL) == pytest.approx(2.0 * abs(math.log(k)) + shift)


@pytest.mark.slow
def test_fit_counting_slopes_on_small_ladders(equal_branches):
    energy, momentum = fit_counting_slopes(
        EQUAL, equal_branches, Z_LADDER, K_LADDER, spec=TINY, scan=8
    )
    assert (energy.route, momentum.route) == ("energy", "momentum")
    assert energy.factor == momentum.factor == 1.0
    assert len(energy.rows()) == len(momentum.rows()) == 5
    assert energy.abscissae == pytest.approx(sorted(abs(math.log(-z)) for z in Z_LADDER))
    expected = sorted(2.0 * cutoff_parameter([k, 0.0, 0.0], 0.0, EQUAL) for k in K_LADDER)
    assert momentum.abscissae == pytest.approx(expected)
    assert all(c >= 0 for c in energy.counts + momentum.counts)


@pytest.mark.slow
def test_three_routes_agree_for_equal_masses(equal_branches):
    spec = GridSpec(nodes_per_decade=3.0, n_polar=3, n_azimuth=4, n_far=6)
    sobolev = estimate_U(1.0, sobolev_coefficients(EQUAL), r_ladder=R_LADDER, ell_max=20, n=160)
    energy, momentum = fit_counting_slopes(
        EQUAL, equal_branches, Z_LADDER, K_LADDER, spec=spec, scan=12
    )
    estimates = [sobolev.estimate, energy.estimate, momentum.estimate]
    assert all(u > 0.0 for u in estimates)
    for a in estimates:
        for b in estimates:
            assert abs(agreement_ratio(a, b) - 1.0) <= 0.3
