import math

import numpy as np
import pytest

from efimov_kit.efimov.slopes import SlopeFit
from efimov_kit.errors import InvariantError
from efimov_kit.linalg.eigensolve import count_above, determinant_sym
from efimov_kit.three_body.channels import (
    channel_minimum,
    channel_value,
    essential_spectrum,
    lower_bound,
    merge_intervals,
    quadratic_symbol,
    small_momentum_delta,
)
from efimov_kit.three_body.faddeev import (
    DEFAULT_DELTAS,
    FaddeevSolver,
    GridSpec,
    count_N,
    finiteness_probe,
    hilbert_schmidt_norm,
    lower_bound_gap,
    shifted_delta,
    sign_changes,
    spectator_symbol,
)
from efimov_kit.two_body.branch import clear_branch_cache, tabulate_branch
from efimov_kit.two_body.determinant import mu_resonance, resonant_config

EQUAL = resonant_config((1.0, 1.0, 1.0))
UNEQUAL = resonant_config((1.0, 2.0, 3.0), strict_hypothesis=True)
RESOLUTION = 9
SCAN = 12
K_SMALL = np.array([0.3, 0.0, 0.0])
COARSE = GridSpec(nodes_per_decade=2.0, n_polar=2, n_azimuth=3, n_far=4)
MEDIUM = GridSpec(nodes_per_decade=3.0, n_polar=3, n_azimuth=4, n_far=6)
ORIGIN = np.zeros(3)


@pytest.fixture(scope="module")
def equal_branches():
    clear_branch_cache()
    return {a: tabulate_branch(a, EQUAL, resolution=RESOLUTION) for a in (1, 2, 3)}


@pytest.fixture(scope="module")
def unequal_branches():
    clear_branch_cache()
    return {a: tabulate_branch(a, UNEQUAL, resolution=RESOLUTION) for a in (1, 2, 3)}


def test_merge_intervals():
    assert merge_intervals([(2.0, 3.0), (0.0, 1.0), (0.5, 2.0)]) == [(0.0, 3.0)]
    assert merge_intervals([(0.0, 1.0), (2.0, 3.0)]) == [(0.0, 1.0), (2.0, 3.0)]
    assert merge_intervals([]) == []


def test_sign_changes():
    assert sign_changes([1.0, 0.5, -0.2, -1.0, 0.3]) == 2
    assert sign_changes([1.0, 0.0, 2.0]) == 0


def test_channel_value_table_and_direct_agree(unequal_branches):
    p = np.array([[0.2, -0.4, 1.0], [2.0, 0.1, -0.3]])
    from_table = channel_value(1, K_SMALL, p, UNEQUAL, branch=unequal_branches[1])
    direct = channel_value(1, K_SMALL, p, UNEQUAL)
    assert np.allclose(from_table, direct, atol=2e-2)


def test_essential_spectrum_at_zero_momentum(equal_branches):
    bands = essential_spectrum(np.zeros(3), EQUAL, equal_branches, scan=SCAN)
    assert bands.tau_ess == pytest.approx(0.0, abs=1e-6)
    assert bands.three_body_band[0] == pytest.approx(0.0, abs=1e-10)


def test_essential_spectrum_below_three_body_band(unequal_branches):
    bands = essential_spectrum(K_SMALL, UNEQUAL, unequal_branches, scan=SCAN)
    assert bands.tau_ess < bands.three_body_band[0]
    for alpha in (1, 2, 3):
        minimum = bands.channel_minima[alpha]
        assert minimum is not None
        assert minimum.value >= bands.tau_ess
        assert minimum.positive_definite


def test_band_structure_is_well_formed(unequal_branches):
    bands = essential_spectrum(K_SMALL, UNEQUAL, unequal_branches, scan=SCAN)
    merged = bands.merged
    assert all(lo <= hi for lo, hi in merged)
    assert all(a[1] < b[0] for a, b in zip(merged, merged[1:]))
    assert merged[0][0] == pytest.approx(bands.tau_ess)
    rows = bands.rows()
    expected = 1 + sum(len(v) for v in bands.channel_intervals.values())
    assert len(rows) == expected
    assert {row["source"] for row in rows} >= {"band", "channel1"}


def test_channel_minimum_at_zero_momentum(equal_branches):
    minimum = channel_minimum(1, np.zeros(3), EQUAL, equal_branches[1], scan=SCAN)
    assert minimum.value == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(minimum.minimizer, 0.0, atol=1e-3)


def test_lower_bound_formula(unequal_branches):
    bands = essential_spectrum(K_SMALL, UNEQUAL, unequal_branches, scan=SCAN)
    expected = bands.channel_minima[2].value - mu_resonance(3, UNEQUAL) - UNEQUAL.mu_of(1)
    assert lower_bound(2, bands, UNEQUAL) == pytest.approx(expected)


def test_small_momentum_delta_matches_shifted_determinant():
    K = np.array([1e-3, 0.0, 0.0])
    p = np.array([2e-3, -1e-3, 5e-4])
    z = -1e-6
    exact = shifted_delta(1, K, p, z, EQUAL)
    assert small_momentum_delta(1, K, p, z, EQUAL) == pytest.approx(float(exact), rel=5e-2)


def test_quadratic_symbol_matches_spectator_symbol():
    p = np.array([1e-2, -2e-2, 5e-3])
    q = np.array([-1e-2, 1e-2, 2e-2])
    exact = spectator_symbol(1, 2, np.zeros(3), p[None, :], q[None, :], UNEQUAL)[0, 0]
    assert quadratic_symbol(1, 2, np.zeros(3), p, q, UNEQUAL) == pytest.approx(exact, rel=1e-3)
    with pytest.raises(ValueError):
        quadratic_symbol(1, 1, np.zeros(3), p, q, UNEQUAL)


def test_grid_spec_refinement_and_digest():
    spec = GridSpec()
    fine = spec.refined()
    assert fine.nodes_per_decade == 2 * spec.nodes_per_decade
    assert fine.n_polar == 2 * spec.n_polar
    assert spec.digest() != fine.digest()
    assert spec.digest() == GridSpec().digest()
    assert spec.inner_radius(0.0) == spec.inner_floor
    with pytest.raises(ValueError):
        GridSpec(n_polar=0)


def test_faddeev_matrix_structure(equal_branches):
    solver = FaddeevSolver(K_SMALL, EQUAL, equal_branches, COARSE, scan=SCAN)
    faddeev = solver.assemble(solver.tau_ess - 0.5)
    assert np.allclose(faddeev.matrix, faddeev.matrix.T)
    for alpha in (1, 2, 3):
        assert np.all(faddeev.block(alpha, alpha) == 0.0)
    assert np.all(faddeev.block(1, 2) > 0.0)
    assert faddeev.order == sum(len(g.weights) for g in faddeev.grids.values())


def test_count_vanishes_far_below_threshold(equal_branches):
    solver = FaddeevSolver(K_SMALL, EQUAL, equal_branches, COARSE, scan=SCAN)
    assert solver.count(solver.tau_ess - 20.0) == 0


def test_determinant_sign_matches_count(equal_branches):
    solver = FaddeevSolver(K_SMALL, EQUAL, equal_branches, COARSE, scan=SCAN)
    for gap in (1.0, 1e-2, 1e-4):
        z = solver.tau_ess - gap
        matrix = solver.assemble(z).matrix
        n = count_above(matrix, 1.0)
        assert solver.count(z) == n
        assert math.copysign(1.0, solver.determinant(z)) == (-1.0) ** n


def test_kernel_rejects_energy_in_continuum(equal_branches):
    solver = FaddeevSolver(K_SMALL, EQUAL, equal_branches, COARSE, scan=SCAN)
    with pytest.raises((InvariantError, ValueError)):
        solver.assemble(solver.tau_ess + 0.5)


@pytest.mark.slow
def test_lower_bound_gap_holds(unequal_branches):
    bound, tau_s = lower_bound_gap(K_SMALL, UNEQUAL, unequal_branches, COARSE)
    bands = essential_spectrum(K_SMALL, UNEQUAL, unequal_branches)
    assert tau_s <= bands.tau_ess + 1e-9
    assert bound <= tau_s


@pytest.mark.slow
def test_finiteness_probe_report(equal_branches):
    deltas = (1e-2, 1e-3)
    report = finiteness_probe(K_SMALL, EQUAL, equal_branches, COARSE, deltas=deltas, scan=SCAN)
    assert report.deltas == deltas
    assert len(report.rows()) == len(deltas)
    assert np.isfinite(report.hs_norm) and report.hs_norm > 0.0
    assert np.isfinite(report.refined_hs_norm)


@pytest.mark.slow
def test_sign_changes_follow_count_along_sweep(unequal_branches):
    solver = FaddeevSolver(np.zeros(3), UNEQUAL, unequal_branches, COARSE, scan=SCAN)
    zs = -np.logspace(-1, -4, 20)
    grids = solver.grids(float(zs[-1]))
    counts, dets = [], []
    for z in zs:
        matrix = solver.assemble(float(z), grids).matrix
        counts.append(count_above(matrix, 1.0))
        dets.append(determinant_sym(np.eye(len(matrix)) - matrix))
    for n, det in zip(counts, dets):
        assert math.copysign(1.0, det) == (-1.0) ** n
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    assert (counts[-1] - counts[0] - sign_changes(dets)) % 2 == 0


@pytest.fixture(scope="module")
def small_momentum_report(equal_branches):
    return finiteness_probe(
        K_SMALL, EQUAL, equal_branches, MEDIUM, deltas=(1e-4, 1e-5), scan=SCAN
    )


@pytest.mark.slow
@pytest.mark.parametrize("z", [-1e-1, -1e-2])
def test_count_is_stable_under_grid_doubling(equal_branches, z):
    coarse = count_N(ORIGIN, z, EQUAL, equal_branches, MEDIUM)
    fine = count_N(ORIGIN, z, EQUAL, equal_branches, MEDIUM.refined())
    assert coarse == fine


@pytest.mark.slow
def test_counts_grow_along_energy_ladder(equal_branches):
    solver = FaddeevSolver(ORIGIN, EQUAL, equal_branches, MEDIUM, scan=SCAN)
    zs = [-(10.0**-m) for m in range(1, 6)]
    grids = solver.grids(zs[-1])
    counts = [count_above(solver.assemble(z, grids).matrix, 1.0) for z in zs]
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] > counts[0]
    fit = SlopeFit.fit("energy", [abs(math.log(-z)) for z in zs], counts)
    assert fit.slope > 0.0


@pytest.mark.slow
def test_count_is_finite_at_nonzero_momentum(small_momentum_report):
    report = small_momentum_report
    assert report.stabilized
    assert len(set(report.counts)) == 1
    assert report.counts == report.refined_counts


@pytest.mark.slow
def test_count_grows_at_zero_momentum(equal_branches):
    report = finiteness_probe(
        ORIGIN, EQUAL, equal_branches, MEDIUM, deltas=DEFAULT_DELTAS, scan=SCAN
    )
    assert report.counts[-1] > report.counts[0]


@pytest.mark.slow
def test_hilbert_schmidt_norm_stable_at_nonzero_momentum(small_momentum_report):
    report = small_momentum_report
    assert abs(report.refined_hs_norm / report.hs_norm - 1.0) < 0.02


@pytest.mark.slow
def test_hilbert_schmidt_norm_grows_at_zero_momentum(equal_branches):
    solver = FaddeevSolver(ORIGIN, EQUAL, equal_branches, MEDIUM, scan=SCAN)
    near = hilbert_schmidt_norm(solver.assemble(-1e-5))
    far = hilbert_schmidt_norm(solver.assemble(-1e-1))
    assert near > 1.2 * far


@pytest.mark.slow
def test_ground_state_below_threshold_at_zero_momentum(equal_branches):
    solver = FaddeevSolver(ORIGIN, EQUAL, equal_branches, MEDIUM, scan=SCAN)
    ground = solver.ground_state()
    assert ground is not None and ground < 0.0
    bound, tau_s = lower_bound_gap(ORIGIN, EQUAL, equal_branches, MEDIUM, solver=solver)
    assert tau_s == pytest.approx(ground)
    assert bound <= tau_s
