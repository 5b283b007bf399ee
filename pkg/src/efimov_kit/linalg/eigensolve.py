"""
Dense symmetric linear algebra: inertia counts, extreme eigenvalues,
determinants and bracketed scalar roots.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import linalg, optimize
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from efimov_kit.errors import ConvergenceError, InvariantError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
ZERO_PIVOT_SHIFT = 1e-12
DENSE_EIGEN_LIMIT = 64


@dataclass(frozen=True)
class SymmetricMatrix:
    """A finite real symmetric matrix in full storage."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"Expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvariantError("Matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
        if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL * scale:
            raise InvariantError("Matrix is not symmetric")
        object.__setattr__(self, "data", a)

    @property
    def order(self) -> int:
        return self.data.shape[0]


MatrixLike = Union[SymmetricMatrix, npt.ArrayLike]


def _as_array(A: MatrixLike) -> np.ndarray:
    if isinstance(A, SymmetricMatrix):
        return A.data
    return SymmetricMatrix(np.asarray(A, dtype=float)).data


def _block_pivots(d: np.ndarray):
    """Yield the 1x1 and 2x2 diagonal blocks of a Bunch-Kaufman D factor."""
    n = d.shape[0]
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            yield d[i : i + 2, i : i + 2]
            i += 2
        else:
            yield d[i : i + 1, i : i + 1]
            i += 1


def inertia(A: MatrixLike, shift: float = 0.0) -> Tuple[int, int, int]:
    """
    Numbers of positive, negative and zero eigenvalues of A - shift*I,
    read off the symmetric indefinite factorization (Sylvester's law).
    """
    a = _as_array(A)
    _, d, _ = linalg.ldl(a - shift * np.eye(a.shape[0]), lower=True)
    positive = negative = zero = 0
    for block in _block_pivots(d):
        if block.shape == (1, 1):
            v = block[0, 0]
            positive += v > 0
            negative += v < 0
            zero += v == 0
            continue
        det = block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0]
        if det < 0:
            positive += 1
            negative += 1
        elif det > 0:
            trace = block[0, 0] + block[1, 1]
            if trace > 0:
                positive += 2
            else:
                negative += 2
        else:
            zero += 1
            if block[0, 0] + block[1, 1] > 0:
                positive += 1
            else:
                negative += 1
    return int(positive), int(negative), int(zero)


def count_above(A: MatrixLike, lam: float) -> int:
    """
    Number of eigenvalues of A strictly greater than ``lam``.

    An exact zero pivot triggers one retry with ``lam`` nudged up by 1e-12.
    """
    a = _as_array(A)
    positive, _, zero = inertia(a, lam)
    if zero == 0:
        return positive
    nudged = lam + ZERO_PIVOT_SHIFT * max(1.0, abs(lam))
    logger.debug(f"Zero pivot at shift {lam}; retrying at {nudged}")
    positive, _, zero = inertia(a, nudged)
    if zero:
        raise ConvergenceError(f"Factorization of A - {lam} I stays singular")
    return positive


def max_eigenvalue(
    A: MatrixLike, seed: int = 0, tol: float = 1e-12, maxiter: int = 10_000
) -> float:
    """Largest eigenvalue, by Lanczos with a seeded start vector."""
    a = _as_array(A)
    n = a.shape[0]
    if n <= DENSE_EIGEN_LIMIT:
        return float(linalg.eigh(a, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        values = eigsh(a, k=1, which="LA", v0=v0, tol=tol, maxiter=maxiter,
                       return_eigenvectors=False)
    except ArpackNoConvergence as e:
        raise ConvergenceError(f"Lanczos iteration did not converge: {e}")
    return float(values[0])


def log_determinant_sym(A: MatrixLike) -> Tuple[float, float]:
    """Sign and log-magnitude of det(A) from the factorization pivots."""
    a = _as_array(A)
    _, d, _ = linalg.ldl(a, lower=True)
    sign = 1.0
    log_abs = 0.0
    for block in _block_pivots(d):
        det = float(np.linalg.det(block)) if block.shape == (2, 2) else float(block[0, 0])
        if det == 0.0:
            return 0.0, -math.inf
        sign *= math.copysign(1.0, det)
        log_abs += math.log(abs(det))
    return sign, log_abs


def determinant_sym(A: MatrixLike) -> float:
    sign, log_abs = log_determinant_sym(A)
    if sign == 0.0:
        return 0.0
    return sign * math.exp(log_abs)


def bracketed_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    maxiter: int = 200,
) -> float:
    """
    Root of a scalar function with a sign change on [lo, hi].

    Brent's method (bisection safeguarded secant and inverse quadratic steps).

    Raises:
        InvariantError: If f(lo) and f(hi) do not bracket a root.
        ConvergenceError: If the iteration limit is reached.
    """
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise InvariantError(
            f"Root not bracketed on [{lo}, {hi}]: f = {f_lo}, {f_hi}"
        )
    try:
        root, info = optimize.brentq(
            f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
            maxiter=maxiter, full_output=True, disp=False,
        )
    except RuntimeError as e:
        raise ConvergenceError(f"Root search failed: {e}")
    if not info.converged:
        raise ConvergenceError(
            f"Root search stopped after {info.iterations} iterations: {info.flag}"
        )
    return float(root)
