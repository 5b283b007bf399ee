import math

import numpy as np
import pytest

from efimov_kit.errors import InvariantError
from efimov_kit.linalg.eigensolve import (
    SymmetricMatrix,
    bracketed_root,
    count_above,
    determinant_sym,
    inertia,
    log_determinant_sym,
    max_eigenvalue,
)

DIAGONAL = np.diag([3.0, 0.5, -1.0])
TRIALS = 50
ORDER = 200


def random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


def test_count_above_diagonal():
    assert count_above(DIAGONAL, 1.0) == 1
    assert count_above(DIAGONAL, -2.0) == 3
    assert count_above(DIAGONAL, 5.0) == 0


def test_count_above_exact_eigenvalue_is_excluded():
    assert count_above(DIAGONAL, 0.5) == 1


def test_count_above_matches_eigendecomposition():
    rng = np.random.default_rng(7)
    for _ in range(TRIALS):
        a = random_symmetric(rng, ORDER)
        lam = rng.uniform(-5.0, 5.0)
        expected = int(np.count_nonzero(np.linalg.eigvalsh(a) > lam))
        assert count_above(a, lam) == expected


def test_count_above_is_monotone_in_threshold():
    rng = np.random.default_rng(1)
    a = random_symmetric(rng, 60)
    counts = [count_above(a, lam) for lam in np.linspace(-10, 10, 21)]
    assert all(x >= y for x, y in zip(counts, counts[1:]))


def test_inertia_invariant_under_congruence():
    rng = np.random.default_rng(3)
    a = random_symmetric(rng, 40)
    s = np.eye(40) + 0.1 * rng.standard_normal((40, 40))
    b = s.T @ a @ s
    b = 0.5 * (b + b.T)
    assert inertia(a) == inertia(b)


def test_gershgorin_bound_gives_zero():
    rng = np.random.default_rng(5)
    a = random_symmetric(rng, 30)
    bound = float(np.max(np.sum(np.abs(a), axis=1)))
    assert count_above(a, bound + 1.0) == 0


def test_max_eigenvalue():
    assert max_eigenvalue(DIAGONAL) == pytest.approx(3.0)
    v = np.arange(1.0, 6.0)
    assert max_eigenvalue(np.outer(v, v)) == pytest.approx(float(v @ v), rel=1e-10)


def test_max_eigenvalue_large_matrix_matches_oracle():
    rng = np.random.default_rng(11)
    a = random_symmetric(rng, ORDER)
    expected = float(np.linalg.eigvalsh(a)[-1])
    assert max_eigenvalue(a, seed=0) == pytest.approx(expected, abs=1e-9)


def test_determinant():
    assert determinant_sym(np.eye(5)) == pytest.approx(1.0)
    assert determinant_sym(np.diag([2.0, -3.0])) == pytest.approx(-6.0)


def test_determinant_spd_matches_eigenvalue_product():
    rng = np.random.default_rng(13)
    b = rng.standard_normal((100, 100))
    a = b @ b.T / 100 + np.eye(100)
    sign, log_abs = log_determinant_sym(a)
    expected = float(np.sum(np.log(np.linalg.eigvalsh(a))))
    assert sign == 1.0
    assert log_abs == pytest.approx(expected, rel=1e-8)


def test_determinant_sign_follows_negative_count():
    rng = np.random.default_rng(17)
    a = random_symmetric(rng, 25)
    sign, _ = log_determinant_sym(a)
    negative = int(np.count_nonzero(np.linalg.eigvalsh(a) < 0))
    assert sign == (-1.0) ** negative


def test_symmetric_matrix_rejects_asymmetry():
    with pytest.raises(InvariantError):
        SymmetricMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvariantError):
        SymmetricMatrix(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_bracketed_root():
    assert bracketed_root(lambda x: x - 1.0, 0.0, 2.0) == pytest.approx(1.0, abs=1e-10)
    assert bracketed_root(math.cos, 1.0, 2.0) == pytest.approx(math.pi / 2, abs=1e-10)


def test_bracketed_root_needs_sign_change():
    with pytest.raises(InvariantError):
        bracketed_root(lambda x: x * x + 1.0, -1.0, 1.0)
