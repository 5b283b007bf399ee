import numpy as np
import pytest

from efimov_kit.linalg.eigensolve import count_above
from efimov_kit.model.core import SystemConfig
from efimov_kit.three_body.direct import DirectHamiltonian
from efimov_kit.three_body.faddeev import FaddeevSolver, GridSpec, count_N
from efimov_kit.two_body.branch import clear_branch_cache, tabulate_branch

STRONG = SystemConfig(1.0, 1.0, 1.0, 8.0, 8.0, 8.0)
UNEQUAL = SystemConfig(1.0, 2.0, 3.0, 6.0, 7.0, 9.0)
GRID = 4


@pytest.fixture(scope="module")
def strong():
    return DirectHamiltonian(STRONG, GRID)


def test_apply_is_symmetric(strong):
    rng = np.random.default_rng(0)
    f, g = rng.standard_normal((2, strong.dimension))
    assert f @ strong.apply(g) == pytest.approx(g @ strong.apply(f), rel=1e-10)


def test_weak_coupling_spectrum_is_nearly_kinetic():
    weak = DirectHamiltonian(SystemConfig(1.0, 1.0, 1.0, 1e-8, 1e-8, 1e-8), 3)
    bottom = float(weak.energy.min())
    assert weak.lowest(2)[0] == pytest.approx(bottom, abs=1e-6)
    assert weak.threshold == pytest.approx(bottom, abs=1e-6)
    assert weak.threshold <= bottom


def test_attraction_lowers_threshold(strong):
    assert strong.threshold < float(strong.energy.min())
    assert min(strong.channel_bottoms) == pytest.approx(strong.threshold)


@pytest.mark.parametrize("cfg", [STRONG, UNEQUAL])
def test_birman_schwinger_count_is_exact(cfg):
    hamiltonian = DirectHamiltonian(cfg, GRID)
    for shift in (0.1, 1.0, 4.0):
        z = hamiltonian.threshold - shift
        expected = hamiltonian.count_below(z)
        assert count_above(hamiltonian.uniform_faddeev(z), 1.0) == expected


def test_faddeev_matrix_is_symmetric_with_empty_diagonal(strong):
    n = strong.size
    matrix = strong.uniform_faddeev(strong.threshold - 1.0)
    assert np.allclose(matrix, matrix.T)
    for a in range(3):
        assert np.all(matrix[a * n:(a + 1) * n, a * n:(a + 1) * n] == 0.0)


def test_faddeev_rejects_energy_above_threshold(strong):
    with pytest.raises(ValueError):
        strong.uniform_faddeev(strong.threshold + 0.1)


def test_rejects_tiny_grid():
    with pytest.raises(ValueError):
        DirectHamiltonian(STRONG, 1)


@pytest.mark.slow
def test_direct_grid_matches_faddeev_solver():
    clear_branch_cache()
    branches = {a: tabulate_branch(a, STRONG, resolution=9) for a in (1, 2, 3)}
    spec = GridSpec(nodes_per_decade=2.0, n_polar=2, n_azimuth=3, n_far=12)
    solver = FaddeevSolver(np.zeros(3), STRONG, branches, spec, scan=12)
    hamiltonian = DirectHamiltonian(STRONG, 6)

    assert solver.tau_ess < 0.0 and hamiltonian.threshold < 0.0
    assert hamiltonian.threshold == pytest.approx(solver.tau_ess, rel=0.2)

    direct_ground = float(hamiltonian.lowest(1)[0])
    faddeev_ground = solver.ground_state()
    assert direct_ground < hamiltonian.threshold
    assert faddeev_ground is not None and faddeev_ground < solver.tau_ess
    depth = hamiltonian.threshold - direct_ground
    assert solver.tau_ess - faddeev_ground == pytest.approx(depth, rel=0.25)

    deep = min(direct_ground, faddeev_ground) - 1.0
    assert count_N(np.zeros(3), deep, STRONG, branches, spec) == 0
    assert hamiltonian.count_below(deep) == 0
    upper = min(hamiltonian.threshold, solver.tau_ess)
    top = max(direct_ground, faddeev_ground)
    if top < upper:
        between = 0.5 * (top + upper)
        assert solver.count(between) >= 1
        assert hamiltonian.count_below(between) >= 1
