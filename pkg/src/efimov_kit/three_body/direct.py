"""
Brute-force discretization of H(0) on a uniform momentum grid.

States are pairs (k1, k2) of grid momenta 2 pi j / n with k3 = -k1 - k2.
Pair potential alpha keeps the spectator momentum k_alpha fixed and couples
all states of the pair with rank one, weighted by mu_alpha / n^3. The
discrete Faddeev matrix built from the same grid has exactly as many
eigenvalues above 1 as H has below z.
"""

from __future__ import annotations

import logging
from functools import cached_property
from typing import Tuple

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, eigsh

from efimov_kit.errors import ConvergenceError, InvariantError
from efimov_kit.model.core import TWO_PI, SystemConfig, epsilon

logger = logging.getLogger(__name__)


class DirectHamiltonian:
    """Matrix-free H(0) on an n^3 x n^3 grid of (k1, k2)."""

    def __init__(self, cfg: SystemConfig, n: int, seed: int = 0):
        if n < 2:
            raise ValueError(f"Direct grid needs n >= 2, got {n}")
        self.cfg = cfg
        self.n = n
        self.seed = seed
        self.size = n**3

        digits = np.stack(
            np.meshgrid(*(np.arange(n),) * 3, indexing="ij"), axis=-1
        ).reshape(-1, 3)
        self.digits = digits
        momenta = TWO_PI * digits / n
        e = epsilon(momenta)
        # index of k1 + k2 and of k3 = -(k1 + k2)
        total = (digits[:, None, :] + digits[None, :, :]) % n
        self.sum_index = (total[..., 0] * n + total[..., 1]) * n + total[..., 2]
        third = (-total) % n
        third_index = (third[..., 0] * n + third[..., 1]) * n + third[..., 2]
        self.energy = (
            cfg.l_of(1) * e[:, None] + cfg.l_of(2) * e[None, :] + cfg.l_of(3) * e[third_index]
        )

    @property
    def dimension(self) -> int:
        return self.size * self.size

    def apply(self, f: np.ndarray) -> np.ndarray:
        F = f.reshape(self.size, self.size)
        c = np.array(self.cfg.mu) / self.size
        out = self.energy * F
        out -= c[0] * F.sum(axis=1, keepdims=True)
        out -= c[1] * F.sum(axis=0, keepdims=True)
        pair = np.bincount(self.sum_index.ravel(), weights=F.ravel(), minlength=self.size)
        out -= c[2] * pair[self.sum_index]
        return out.ravel()

    def operator(self) -> LinearOperator:
        n = self.dimension
        return LinearOperator((n, n), matvec=self.apply, dtype=float)

    def lowest(self, count: int = 6) -> np.ndarray:
        """The ``count`` lowest eigenvalues, ascending."""
        v0 = np.random.default_rng(self.seed).standard_normal(self.dimension)
        try:
            values = eigsh(self.operator(), k=count, which="SA", v0=v0, tol=1e-12,
                           maxiter=10_000, return_eigenvectors=False)
        except Exception as e:
            raise ConvergenceError(f"Lanczos iteration on the direct grid failed: {e}")
        return np.sort(values)

    def _fibre_ground(self, diagonal: np.ndarray, mu: float) -> float:
        matrix = np.diag(diagonal) - (mu / self.size) * np.ones((len(diagonal),) * 2)
        return float(linalg.eigh(matrix, eigvals_only=True, subset_by_index=[0, 0])[0])

    @cached_property
    def channel_bottoms(self) -> Tuple[float, float, float]:
        """Lowest eigenvalue of each channel operator H_alpha on the grid."""
        mu = self.cfg.mu
        first = min(self._fibre_ground(self.energy[a, :], mu[0]) for a in range(self.size))
        second = min(self._fibre_ground(self.energy[:, b], mu[1]) for b in range(self.size))
        flat_sum = self.sum_index.ravel()
        flat_energy = self.energy.ravel()
        third = min(
            self._fibre_ground(flat_energy[flat_sum == s], mu[2]) for s in range(self.size)
        )
        return first, second, third

    @property
    def threshold(self) -> float:
        """Bottom of the grid analogue of the essential spectrum."""
        return min(min(self.channel_bottoms), float(self.energy.min()))

    def count_below(self, z: float, start: int = 6) -> int:
        count = start
        while True:
            count = min(count, self.dimension - 2)
            values = self.lowest(count)
            below = int(np.count_nonzero(values < z))
            if below < count or count == self.dimension - 2:
                return below
            count *= 2

    def uniform_faddeev(self, z: float) -> np.ndarray:
        """
        Discrete Faddeev matrix at energy z, with Delta_alpha(k_alpha) formed
        from the same grid sums.
        """
        if z >= self.threshold:
            raise ValueError(f"z={z} is not below the grid threshold {self.threshold}")
        mu = np.array(self.cfg.mu)
        resolvent = 1.0 / (self.energy - z)
        n = self.size
        # index of -k for every grid momentum k
        negated = (-self.digits) % self.n
        neg = (negated[:, 0] * self.n + negated[:, 1]) * self.n + negated[:, 2]
        pair = np.bincount(self.sum_index.ravel(), weights=resolvent.ravel(), minlength=n)
        deltas = (
            1.0 - mu[0] / n * resolvent.sum(axis=1),
            1.0 - mu[1] / n * resolvent.sum(axis=0),
            1.0 - mu[2] / n * pair[neg],
        )
        if any(np.any(d <= 0.0) for d in deltas):
            raise InvariantError(f"Discrete determinant not positive at z={z}")

        # rows and columns of each block are indexed by spectator momenta
        blocks = {
            (0, 1): resolvent,
            (0, 2): resolvent[np.arange(n)[:, None], self._partner(neg)],
            (1, 2): resolvent.T[np.arange(n)[:, None], self._partner(neg)],
        }
        matrix = np.zeros((3 * n, 3 * n))
        for (a, b), r in blocks.items():
            scaled = np.sqrt(mu[a] * mu[b]) / n * r
            scaled = scaled / np.sqrt(deltas[a])[:, None] / np.sqrt(deltas[b])[None, :]
            matrix[a * n:(a + 1) * n, b * n:(b + 1) * n] = scaled
            matrix[b * n:(b + 1) * n, a * n:(a + 1) * n] = scaled.T
        return matrix

    def _partner(self, neg: np.ndarray) -> np.ndarray:
        # for spectator k_a and k3 = c, the remaining momentum is -(k_a + c)
        return neg[self.sum_index]
