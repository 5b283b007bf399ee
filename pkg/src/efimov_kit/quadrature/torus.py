"""
Quadrature rules on the torus (-pi, pi]^3.

- ``UniformTorusGrid``: periodic product midpoint rule.
- ``GradedSphericalGrid``: log-radial spherical rule around a center plus a
  uniform far field on the complement of the ball.
- ``integrate_inverse_epsilon``: the lattice constant
  W = (2 pi)^-3 int dq / eps(q) by three independent routes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
from scipy import special

from efimov_kit.errors import ConvergenceError, InvariantError
from efimov_kit.model.core import TWO_PI, reduce_torus
from efimov_kit.quadrature.lattice import lattice_green

logger = logging.getLogger(__name__)

TORUS_VOLUME = TWO_PI**3

DEFAULT_RESOLUTIONS = (48, 64, 96, 128)

# Smooth cutoff (1 - (r/R)^2)^6 and its radial integral over [0, R] divided by R.
_BUMP_POWER = 6
_BUMP_INTEGRAL = 1024.0 / 3003.0


def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    if n < 1:
        raise ValueError(f"Gauss-Legendre order must be positive, got {n}")
    nodes, weights = special.roots_legendre(n)
    return np.asarray(nodes), np.asarray(weights)


@dataclass(frozen=True)
class UniformTorusGrid:
    """
    N^3 product grid. Shifted grids put nodes at (2j+1)pi/N - pi so that
    q = 0 is never a node.
    """

    n: int
    shifted: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Grid size must be positive, got {self.n}")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @cached_property
    def axis(self) -> np.ndarray:
        j = np.arange(self.n, dtype=float)
        offset = 0.5 if self.shifted else 0.0
        return (j + offset) * self.spacing - np.pi

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.axis
        grid = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
        return grid.reshape(-1, 3)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.n**3, self.spacing**3)

    def descriptor(self) -> Dict[str, object]:
        return {"kind": "uniform", "n": self.n, "shifted": self.shifted}


@dataclass(frozen=True)
class GradedSphericalGrid:
    """
    Ball of radius ``r_outer`` around ``center`` resolved on a log-radial
    scale, completed by uniform far-field nodes outside the ball.

    Radial panels have geometric edges from ``r_inner`` to ``r_outer``
    (``nodes_per_decade`` panels per decade) and carry two Gauss-Legendre
    nodes in log r; each panel's weights are normalized to its exact shell
    volume. The core [0, r_inner] uses ``n_core`` Gauss-Legendre nodes in r.
    Directions are Gauss-Legendre in cos(theta) times a uniform azimuth.
    Far-field weights are normalized to the exact complement volume.
    """

    center: Tuple[float, float, float]
    r_inner: float
    r_outer: float = math.pi
    nodes_per_decade: float = 12.0
    n_core: int = 2
    n_polar: int = 8
    n_azimuth: int = 16
    n_far: int = 32
    far_field: bool = True

    def __post_init__(self):
        if not 0.0 < self.r_inner < self.r_outer <= math.pi:
            raise ValueError(
                f"Need 0 < r_inner < r_outer <= pi, got "
                f"{self.r_inner} and {self.r_outer}"
            )
        if min(self.n_core, self.n_polar, self.n_azimuth, self.n_far) < 1:
            raise ValueError("Grid counts must be positive")
        if self.nodes_per_decade <= 0:
            raise ValueError("nodes_per_decade must be positive")

    @cached_property
    def panel_edges(self) -> np.ndarray:
        decades = math.log10(self.r_outer / self.r_inner)
        count = max(1, math.ceil(decades * self.nodes_per_decade))
        return self.r_inner * (self.r_outer / self.r_inner) ** (
            np.arange(count + 1) / count
        )

    @cached_property
    def _radial(self) -> Tuple[np.ndarray, np.ndarray]:
        x, w = gauss_legendre(self.n_core)
        core_r = 0.5 * self.r_inner * (x + 1.0)
        core_w = 0.5 * self.r_inner * w * core_r**2

        s = np.log(self.panel_edges)
        ds = np.diff(s)
        mid = 0.5 * (s[:-1] + s[1:])
        half = ds / (2.0 * math.sqrt(3.0))
        panel_s = np.stack([mid - half, mid + half], axis=1)
        panel_r = np.exp(panel_s)
        panel_w = 0.5 * ds[:, None] * panel_r**3
        shell = np.diff(self.panel_edges**3) / 3.0
        panel_w *= (shell / panel_w.sum(axis=1))[:, None]

        radii = np.concatenate([core_r, panel_r.ravel()])
        weights = np.concatenate([core_w, panel_w.ravel()])
        return radii, weights

    @property
    def radial_nodes(self) -> np.ndarray:
        return self._radial[0]

    @cached_property
    def _angular(self) -> Tuple[np.ndarray, np.ndarray]:
        cos_t, w_t = gauss_legendre(self.n_polar)
        sin_t = np.sqrt(1.0 - cos_t**2)
        phi = (np.arange(self.n_azimuth) + 0.5) * TWO_PI / self.n_azimuth
        directions = np.stack(
            [
                np.outer(sin_t, np.cos(phi)),
                np.outer(sin_t, np.sin(phi)),
                np.outer(cos_t, np.ones_like(phi)),
            ],
            axis=-1,
        ).reshape(-1, 3)
        weights = np.outer(w_t, np.full(self.n_azimuth, TWO_PI / self.n_azimuth))
        return directions, weights.ravel()

    @cached_property
    def _assembled(self) -> Tuple[np.ndarray, np.ndarray, int]:
        radii, w_r = self._radial
        directions, w_a = self._angular
        center = np.asarray(self.center, dtype=float)

        offsets = (radii[:, None, None] * directions[None, :, :]).reshape(-1, 3)
        ball_nodes = reduce_torus(center + offsets)
        ball_weights = np.outer(w_r, w_a).ravel()
        if not self.far_field:
            return ball_nodes, ball_weights, len(ball_weights)

        far = UniformTorusGrid(self.n_far).nodes
        distance = np.linalg.norm(reduce_torus(far - center), axis=1)
        far = far[distance >= self.r_outer]
        complement = TORUS_VOLUME - 4.0 * math.pi * self.r_outer**3 / 3.0
        if len(far) == 0 and complement > 0:
            raise ValueError(
                f"Far field of size {self.n_far} leaves the ball complement empty"
            )
        far_weights = np.full(len(far), complement / max(len(far), 1))

        nodes = np.concatenate([ball_nodes, far])
        weights = np.concatenate([ball_weights, far_weights])
        return nodes, weights, len(ball_weights)

    @property
    def nodes(self) -> np.ndarray:
        return self._assembled[0]

    @property
    def weights(self) -> np.ndarray:
        return self._assembled[1]

    @property
    def n_ball(self) -> int:
        return self._assembled[2]

    def descriptor(self) -> Dict[str, object]:
        return {
            "kind": "graded",
            "center": [float(c) for c in self.center],
            "r_inner": self.r_inner,
            "r_outer": self.r_outer,
            "nodes_per_decade": self.nodes_per_decade,
            "n_core": self.n_core,
            "n_polar": self.n_polar,
            "n_azimuth": self.n_azimuth,
            "n_far": self.n_far,
            "far_field": self.far_field,
        }


def _weighted_sum(values: np.ndarray, weights: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise InvariantError(f"Integrand is not finite at {bad} node(s)")
    return float(np.sum(values * weights))


def integrate_uniform(
    f: Callable[[np.ndarray], np.ndarray], grid: UniformTorusGrid
) -> float:
    """Weighted node sum of ``f`` over a uniform grid."""
    return _weighted_sum(f(grid.nodes), grid.weights)


def integrate_graded(
    f: Callable[[np.ndarray], np.ndarray], grid: GradedSphericalGrid
) -> float:
    """Weighted node sum of ``f`` over the graded and far-field nodes."""
    return _weighted_sum(f(grid.nodes), grid.weights)


def _inverse_epsilon_mean(n: int, subtract: bool) -> float:
    x = UniformTorusGrid(n).axis
    c = 1.0 - np.cos(x)
    eps = c[:, None, None] + c[None, :, None] + c[None, None, :]
    values = 1.0 / eps
    if subtract:
        rho2 = x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2
        bump = np.clip(1.0 - rho2 / math.pi**2, 0.0, None) ** _BUMP_POWER
        values = values - 2.0 * bump / rho2
    return float(np.mean(values))


def _extrapolate(hs: np.ndarray, values: np.ndarray, powers: Sequence[int]) -> float:
    terms = min(len(hs), len(powers) + 1)
    design = np.stack([hs**0] + [hs**p for p in powers[: terms - 1]], axis=1)
    coefficients, *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(coefficients[0])


def integrate_inverse_epsilon(
    resolutions: Sequence[int] = DEFAULT_RESOLUTIONS,
    method: str = "shifted",
    tol: float = 1e-4,
) -> float:
    """
    The lattice constant W = (2 pi)^-3 int_T3 dq / eps(q).

    Args:
        resolutions: Grid sizes for the two grid methods, coarse to fine.
        method: ``"shifted"`` (midpoint grids, extrapolated in h, h^3, h^5),
            ``"subtraction"`` (a smooth bump times 2/|q|^2 is removed and its
            integral 8 pi R * 1024/3003 added back; extrapolated in h^3, h^5,
            h^7) or ``"laplace"`` (one-dimensional Bessel representation).
        tol: Largest accepted change between the extrapolation from all
            resolutions and the one without the coarsest.

    Returns:
        The value of W.

    Raises:
        ConvergenceError: If successive extrapolations disagree beyond ``tol``.
        ValueError: On an unknown method or too few resolutions.
    """
    if method == "laplace":
        return lattice_green(np.ones(3), 0.0)
    if method not in ("shifted", "subtraction"):
        raise ValueError(f"Unknown method for the lattice integral: {method}")

    resolutions = sorted(int(n) for n in resolutions)
    if len(resolutions) < 2:
        raise ValueError("Need at least two resolutions to extrapolate")

    subtract = method == "subtraction"
    powers = (3, 5, 7) if subtract else (1, 3, 5)
    hs = np.array([TWO_PI / n for n in resolutions])
    values = np.array([_inverse_epsilon_mean(n, subtract) for n in resolutions])
    if subtract:
        values = values + 8.0 * math.pi**2 * _BUMP_INTEGRAL / TORUS_VOLUME

    estimate = _extrapolate(hs, values, powers)
    if len(resolutions) > 2:
        check = _extrapolate(hs[1:], values[1:], powers)
        if abs(check - estimate) > tol:
            raise ConvergenceError(
                f"Lattice integral ({method}) not converged: "
                f"{estimate:.10f} vs {check:.10f}"
            )
    logger.debug(f"Lattice integral ({method}) over {resolutions}: {estimate:.10f}")
    return estimate
