"""
Fredholm determinant of the two-body fibre operators h_alpha(k).

    Delta_alpha(k, z) = 1 - mu_alpha (2 pi)^-3 int dq / (E_k(q) - z)

After the shift q -> q + p_alpha(k) the denominator is
sum_j r_j (1 - cos q_j) + (E_min(k) - z), so Delta depends on k only through
the amplitudes r(k_j) and on z only through the gap below the band.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from efimov_kit.errors import ConvergenceError, InvariantError
from efimov_kit.linalg.eigensolve import bracketed_root
from efimov_kit.model.core import (
    Channel,
    PairIndex,
    SystemConfig,
    amplitudes,
    as_torus_point,
    pair_band_edges,
)
from efimov_kit.quadrature.lattice import lattice_green
from efimov_kit.quadrature.torus import (
    TORUS_VOLUME,
    GradedSphericalGrid,
    integrate_graded,
    integrate_inverse_epsilon,
)

logger = logging.getLogger(__name__)

# |Delta(k, E_min)| below this counts as a band-edge resonance, not a bound state.
EDGE_TOL = 1e-12
ROOT_TOL = 1e-10


@lru_cache(maxsize=None)
def lattice_constant(method: str = "laplace") -> float:
    """W = (2 pi)^-3 int dq / eps(q), computed once per method."""
    return integrate_inverse_epsilon(method=method)


def mu_resonance(alpha: Channel, cfg: SystemConfig, method: str = "laplace") -> float:
    """Coupling mu_alpha^0 = (l_beta + l_gamma) / W of the zero-energy resonance."""
    return cfg.pair_sum(alpha) / lattice_constant(method)


def resonant_config(
    l: Sequence[float],
    factors: Sequence[float] = (1.0, 1.0, 1.0),
    strict_hypothesis: bool = False,
    method: str = "laplace",
) -> SystemConfig:
    """SystemConfig with mu_alpha = factor_alpha * mu_alpha^0."""
    probe = SystemConfig(*l, 1.0, 1.0, 1.0, strict_hypothesis=strict_hypothesis)
    mu = [f * mu_resonance(a, probe, method) for a, f in zip((1, 2, 3), factors)]
    return probe.with_couplings(*mu)


def resonance_flags(cfg: SystemConfig, rtol: float = 1e-9) -> Tuple[bool, bool, bool]:
    """Which channels sit exactly at their resonance coupling."""
    return tuple(
        math.isclose(cfg.mu_of(a), mu_resonance(a, cfg), rel_tol=rtol)
        for a in (1, 2, 3)
    )


class DeterminantEvaluator:
    """
    Cached evaluator of Delta_alpha(k, z) for one channel.

    ``method="laplace"`` integrates the Bessel representation of the lattice
    Green function; ``method="grid"`` sums the shifted integrand over a graded
    spherical grid centred at the minimum. Cache writes are serialized.
    """

    def __init__(
        self,
        alpha: Channel,
        cfg: SystemConfig,
        method: str = "laplace",
        nodes_per_decade: float = 12.0,
        n_polar: int = 8,
        n_azimuth: int = 16,
        n_far: int = 32,
    ):
        if method not in ("laplace", "grid"):
            raise ValueError(f"Unknown determinant method: {method}")
        self.pair = PairIndex.of(alpha)
        self.cfg = cfg
        self.mu = cfg.mu_of(self.pair.alpha)
        self.method = method
        self.grid_options = {
            "nodes_per_decade": nodes_per_decade,
            "n_polar": n_polar,
            "n_azimuth": n_azimuth,
            "n_far": n_far,
        }
        self._cache: Dict[Tuple[float, ...], float] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"DeterminantEvaluator(alpha={self.pair.alpha}, method={self.method!r})"

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def _grid_green(self, r: np.ndarray, gap: float) -> float:
        if gap == 0.0 and r.min() == 0.0:
            return math.inf
        r_inner = 1e-2 * math.sqrt(gap / r.max()) if gap > 0 else 1e-4
        grid = GradedSphericalGrid(
            center=(0.0, 0.0, 0.0),
            r_inner=min(r_inner, 1e-2),
            **self.grid_options,
        )

        def integrand(q):
            return 1.0 / (np.sum(r * (1.0 - np.cos(q)), axis=-1) + gap)

        return integrate_graded(integrand, grid) / TORUS_VOLUME

    def green(self, r: npt.ArrayLike, gap: npt.ArrayLike, cache: bool = True) -> np.ndarray:
        """Lattice Green function at sorted amplitudes ``r`` and gaps ``gap``."""
        r = np.sort(np.asarray(r, dtype=float), axis=-1)
        shape = r.shape[:-1]
        gap = np.broadcast_to(np.asarray(gap, dtype=float), shape).reshape(-1)
        flat = r.reshape(-1, 3)
        keys = [tuple(row) + (g,) for row, g in zip(flat.tolist(), gap.tolist())]

        values = np.empty(len(keys))
        missing = []
        for i, key in enumerate(keys):
            hit = self._cache.get(key) if cache else None
            if hit is None:
                missing.append(i)
            else:
                values[i] = hit

        if missing:
            idx = np.asarray(missing)
            if self.method == "laplace":
                computed = np.atleast_1d(lattice_green(flat[idx], gap[idx]))
            else:
                computed = np.array(
                    [self._grid_green(flat[i], float(gap[i])) for i in idx]
                )
            values[idx] = computed
            if cache:
                with self._lock:
                    for i, v in zip(missing, computed):
                        self._cache[keys[i]] = float(v)
        return values.reshape(shape)

    def delta(self, k: npt.ArrayLike, z: npt.ArrayLike, cache: bool = True):
        """
        Delta_alpha(k, z) for z at or below the band bottom E_min(k).

        Raises:
            ValueError: If z lies above E_min(k).
        """
        k = as_torus_point(k)
        e_min, _ = pair_band_edges(self.pair, k, self.cfg)
        gap = e_min - np.asarray(z, dtype=float)
        slack = 1e-12 * np.maximum(1.0, np.abs(e_min))
        if np.any(gap < -slack):
            raise ValueError("Energy lies inside or above the two-body band")
        r = amplitudes(self.pair, k, self.cfg)
        out = 1.0 - self.mu * self.green(r, np.maximum(gap, 0.0), cache=cache)
        return float(out) if np.ndim(out) == 0 else out

    def rescaled(self, k: npt.ArrayLike, w: npt.ArrayLike):
        """Delta_alpha(k, E_min(k) - w^2)."""
        k = as_torus_point(k)
        r = amplitudes(self.pair, k, self.cfg)
        w = np.asarray(w, dtype=float)
        out = 1.0 - self.mu * self.green(r, w * w)
        return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=64)
def evaluator_for(alpha: int, cfg: SystemConfig, method: str = "laplace") -> DeterminantEvaluator:
    return DeterminantEvaluator(alpha, cfg, method=method)


def delta(alpha: Channel, k: npt.ArrayLike, z: npt.ArrayLike, cfg: SystemConfig):
    return evaluator_for(PairIndex.of(alpha).alpha, cfg).delta(k, z)


def _lower_bracket(evaluator: DeterminantEvaluator, k: np.ndarray, e_min: float, e_max: float) -> float:
    width = max(e_max - e_min, evaluator.mu)
    limit = e_min - 10.0 * width
    step = 0.1 * width
    lo = e_min - step
    while evaluator.delta(k, lo) <= 0.0:
        step *= 2.0
        lo = e_min - step
        if lo < limit:
            raise InvariantError(
                f"Delta has no sign change above {limit} at k={k.tolist()}"
            )
    return lo


def bound_state(
    alpha: Channel,
    k: npt.ArrayLike,
    cfg: SystemConfig,
    tol: float = ROOT_TOL,
    evaluator: Optional[DeterminantEvaluator] = None,
) -> Optional[float]:
    """
    The eigenvalue z_alpha(k) of h_alpha(k) below its band, if any.

    Returns None when Delta(k, E_min(k)) >= 0 (a zero within 1e-12 is a
    band-edge resonance). The lower bracket is widened geometrically down to
    E_min - 10 * max(E_max - E_min, mu_alpha).
    """
    ev = evaluator or evaluator_for(PairIndex.of(alpha).alpha, cfg)
    k = as_torus_point(k)
    e_min, e_max = (float(v) for v in pair_band_edges(ev.pair, k, cfg))
    edge = ev.delta(k, e_min)
    if edge >= -EDGE_TOL:
        return None
    hi = e_min
    if not math.isfinite(edge):
        hi = e_min - tol
        if ev.delta(k, hi, cache=False) >= 0.0:
            return hi
    lo = _lower_bracket(ev, k, e_min, e_max)

    def f(z: float) -> float:
        value = ev.delta(k, z, cache=False)
        if not math.isfinite(value):
            raise ConvergenceError(f"Non-finite Delta at k={k.tolist()}, z={z:.6e}")
        return value

    return bracketed_root(f, lo, hi, tol)


@dataclass(frozen=True)
class SlopeEstimate:
    """Closed-form and finite-difference values of dDelta~/dw at (0, 0+)."""

    analytic: float
    estimate: float

    @property
    def relative_error(self) -> float:
        return abs(self.estimate - self.analytic) / abs(self.analytic)


def analytic_slope(alpha: Channel, cfg: SystemConfig) -> float:
    """mu_alpha / (sqrt(2) pi (l_beta + l_gamma)^(3/2))."""
    pair = PairIndex.of(alpha)
    return cfg.mu_of(pair.alpha) / (math.sqrt(2.0) * math.pi * cfg.pair_sum(pair) ** 1.5)


def expansion_slope(
    alpha: Channel,
    cfg: SystemConfig,
    widths: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    evaluator: Optional[DeterminantEvaluator] = None,
) -> SlopeEstimate:
    """
    Slope of w -> Delta(0, -w^2) at w = 0+, in closed form and from
    difference quotients extrapolated to w = 0 by a polynomial fit.

    Raises:
        ConvergenceError: If the two values differ by more than 5%.
    """
    ev = evaluator or evaluator_for(PairIndex.of(alpha).alpha, cfg)
    origin = np.zeros(3)
    base = ev.rescaled(origin, 0.0)
    w = np.asarray(sorted(widths, reverse=True), dtype=float)
    quotients = np.array([(ev.rescaled(origin, x) - base) / x for x in w])
    coefficients = np.polynomial.polynomial.polyfit(w, quotients, len(w) - 1)
    result = SlopeEstimate(analytic_slope(alpha, cfg), float(coefficients[0]))
    if result.relative_error > 0.05:
        raise ConvergenceError(
            f"Expansion slope {result.estimate:.6f} differs from "
            f"{result.analytic:.6f} by {result.relative_error:.1%}"
        )
    return result


def residue_constant(alpha: Channel, k: npt.ArrayLike, cfg: SystemConfig) -> float:
    """
    Leading coefficient C1(k) of Delta(k, z) ~ C1(k) (z - z_alpha(k)) near the
    root, in its small-k closed form -slope / (2 sqrt(E_min(k) - z_alpha(k))).
    Negative because Delta decreases in z.

    Raises:
        ValueError: If h_alpha(k) has no eigenvalue below its band.
    """
    z = bound_state(alpha, k, cfg)
    if z is None:
        raise ValueError(f"No two-body eigenvalue at k={np.asarray(k).tolist()}")
    e_min, _ = pair_band_edges(alpha, as_torus_point(k), cfg)
    return -analytic_slope(alpha, cfg) / (2.0 * math.sqrt(float(e_min) - z))
