"""
Channel spectra of the three-body fibre H(K) and its essential spectrum.

For channel alpha the bound-state branch contributes the values

    Z_alpha(K, p) = eps_alpha(m_alpha K - p) + z_alpha((m_beta + m_gamma) K + p)

over the momenta p where h_alpha has an eigenvalue below its band.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy import ndimage

from efimov_kit.errors import ConvergenceError
from efimov_kit.model.core import (
    Channel,
    PairIndex,
    SystemConfig,
    as_torus_point,
    epsilon_alpha,
    pair_band_edges,
    three_body_band,
)
from efimov_kit.quadrature.torus import UniformTorusGrid
from efimov_kit.two_body.branch import BoundStateBranch
from efimov_kit.two_body.determinant import (
    DeterminantEvaluator,
    bound_state,
    evaluator_for,
    mu_resonance,
)

logger = logging.getLogger(__name__)

DEFAULT_SCAN = 24
_FD_STEP = 1e-3
_MAX_ITER = 50
_STEP_TOL = 1e-8

Interval = Tuple[float, float]


def pair_momentum(alpha: Channel, K: npt.ArrayLike, p: npt.ArrayLike, cfg: SystemConfig) -> np.ndarray:
    """Momentum (m_beta + m_gamma) K + p of the pair complementary to alpha."""
    pair = PairIndex.of(alpha)
    rest = cfg.m_of(pair.beta) + cfg.m_of(pair.gamma)
    return as_torus_point(rest * np.asarray(K, dtype=float) + np.asarray(p, dtype=float))


def spectator_energy(alpha: Channel, K: npt.ArrayLike, p: npt.ArrayLike, cfg: SystemConfig) -> np.ndarray:
    pair = PairIndex.of(alpha)
    K = np.asarray(K, dtype=float)
    return epsilon_alpha(pair, cfg.m_of(pair.alpha) * K - np.asarray(p, dtype=float), cfg)


def channel_value(
    alpha: Channel,
    K: npt.ArrayLike,
    p: npt.ArrayLike,
    cfg: SystemConfig,
    branch: Optional[BoundStateBranch] = None,
    evaluator: Optional[DeterminantEvaluator] = None,
    tol: float = 1e-12,
):
    """
    Z_alpha(K, p), with the pair band bottom standing in where no two-body
    eigenvalue exists. Uses the branch table when given, otherwise solves
    for z_alpha directly.
    """
    pair = PairIndex.of(alpha)
    p = as_torus_point(p)
    k = pair_momentum(pair, K, p, cfg)
    e_min, _ = pair_band_edges(pair, k, cfg)
    if branch is not None:
        z = np.asarray(branch(k), dtype=float)
        z = np.where(np.isnan(z), e_min, z)
    else:
        ev = evaluator or evaluator_for(pair.alpha, cfg)
        flat = k.reshape(-1, 3)
        bottoms = np.atleast_1d(e_min).reshape(-1)
        z = np.empty(len(flat))
        for i, kk in enumerate(flat):
            root = bound_state(pair, kk, cfg, tol=tol, evaluator=ev)
            z[i] = bottoms[i] if root is None else root
        z = z.reshape(k.shape[:-1])
    out = spectator_energy(pair, K, p, cfg) + z
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ChannelMinimum:
    """Minimum tau_s^alpha(K) of Z_alpha(K, .) and B(K) = Hessian / 2 there."""

    alpha: int
    K: np.ndarray
    minimizer: np.ndarray
    value: float
    quadratic_form: np.ndarray
    iterations: int = 0

    @property
    def positive_definite(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(self.quadratic_form) > 0.0))


def _derivatives(f, p: np.ndarray, h: float) -> Tuple[float, np.ndarray, np.ndarray]:
    f0 = f(p)
    eye = np.eye(3) * h
    plus = np.array([f(p + e) for e in eye])
    minus = np.array([f(p - e) for e in eye])
    grad = (plus - minus) / (2.0 * h)
    hess = np.diag((plus - 2.0 * f0 + minus) / h**2)
    for i in range(3):
        for j in range(i + 1, 3):
            fpp = f(p + eye[i] + eye[j])
            fpm = f(p + eye[i] - eye[j])
            fmp = f(p - eye[i] + eye[j])
            fmm = f(p - eye[i] - eye[j])
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h * h)
    return f0, grad, hess


def channel_minimum(
    alpha: Channel,
    K: npt.ArrayLike,
    cfg: SystemConfig,
    branch: BoundStateBranch,
    scan: int = DEFAULT_SCAN,
    max_iter: int = _MAX_ITER,
) -> ChannelMinimum:
    """
    Global minimum of p -> Z_alpha(K, p).

    A scan of the branch table over an unshifted grid picks the start; Newton
    steps on a finite-difference model of the directly solved Z refine it.

    Raises:
        ConvergenceError: If the refinement does not settle in ``max_iter`` steps.
    """
    pair = PairIndex.of(alpha)
    K = as_torus_point(K)
    nodes = UniformTorusGrid(scan, shifted=False).nodes
    values = channel_value(pair, K, nodes, cfg, branch=branch)
    p = nodes[int(np.argmin(values))].copy()

    ev = evaluator_for(pair.alpha, cfg)

    def f(x):
        return channel_value(pair, K, x, cfg, evaluator=ev)

    for iteration in range(1, max_iter + 1):
        f0, grad, hess = _derivatives(f, p, _FD_STEP)
        try:
            eigvals = np.linalg.eigvalsh(hess)
            step = -np.linalg.solve(hess, grad) if eigvals.min() > 0 else -grad
        except np.linalg.LinAlgError:
            step = -grad
        if np.linalg.norm(step) < _STEP_TOL:
            break
        t = 1.0
        while t > 1e-6:
            candidate = p + t * step
            if f(candidate) < f0:
                break
            t *= 0.5
        else:
            break
        p = as_torus_point(candidate)
        if t * np.linalg.norm(step) < _STEP_TOL:
            break
    else:
        raise ConvergenceError(
            f"Channel {pair.alpha} minimum at K={K.tolist()} not converged "
            f"after {max_iter} iterations"
        )

    value, _, hess = _derivatives(f, p, _FD_STEP)
    logger.debug(
        f"Channel {pair.alpha} minimum at K={K.tolist()}: tau={value:.12g}, "
        f"p={p.tolist()}, {iteration} iteration(s)"
    )
    return ChannelMinimum(
        alpha=pair.alpha,
        K=K,
        minimizer=p,
        value=float(value),
        quadratic_form=0.5 * hess,
        iterations=iteration,
    )


def _periodic_components(mask: np.ndarray) -> Tuple[np.ndarray, int]:
    labels, count = ndimage.label(mask)
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for axis in range(3):
        first = np.take(labels, 0, axis=axis)
        last = np.take(labels, -1, axis=axis)
        for a, b in zip(first.ravel(), last.ravel()):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    roots = sorted({find(x) for x in range(1, count + 1)})
    remap = np.zeros(count + 1, dtype=int)
    for x in range(1, count + 1):
        remap[x] = roots.index(find(x)) + 1
    return remap[labels], len(roots)


def merge_intervals(intervals: List[Interval]) -> List[Interval]:
    merged: List[Interval] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


@dataclass
class BandStructure:
    """Essential spectrum of H(K): channel intervals plus the three-body band."""

    K: np.ndarray
    channel_intervals: Dict[int, List[Interval]]
    channel_minima: Dict[int, Optional[ChannelMinimum]]
    three_body_band: Interval
    merged: List[Interval] = field(default_factory=list)
    tau_ess: float = math.nan

    def __post_init__(self):
        intervals = [self.three_body_band]
        for values in self.channel_intervals.values():
            intervals.extend(values)
        self.merged = merge_intervals(intervals)
        self.tau_ess = min(lo for lo, _ in intervals)

    def rows(self) -> List[Dict[str, object]]:
        """One row per interval, for tabular reports."""
        out = []
        sources = [("band", self.three_body_band)] + [
            (f"channel{a}", iv) for a in sorted(self.channel_intervals) for iv in self.channel_intervals[a]
        ]
        for source, (lo, hi) in sources:
            out.append(
                {
                    "K1": float(self.K[0]),
                    "K2": float(self.K[1]),
                    "K3": float(self.K[2]),
                    "source": source,
                    "lower": float(lo),
                    "upper": float(hi),
                    "tau_ess": float(self.tau_ess),
                }
            )
        return out


def essential_spectrum(
    K: npt.ArrayLike,
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    scan: int = DEFAULT_SCAN,
) -> BandStructure:
    """
    Channel value sets over the scan grid, split into periodic connected
    components of the existence region, with the lower end of the component
    holding the global minimum replaced by the refined tau_s^alpha(K).
    """
    K = as_torus_point(K)
    nodes = UniformTorusGrid(scan, shifted=False).nodes
    intervals: Dict[int, List[Interval]] = {}
    minima: Dict[int, Optional[ChannelMinimum]] = {}
    for alpha in (1, 2, 3):
        branch = branches[alpha]
        k = pair_momentum(alpha, K, nodes, cfg)
        mask = branch.exists(k)
        if not np.any(mask):
            intervals[alpha] = []
            minima[alpha] = None
            continue
        values = channel_value(alpha, K, nodes, cfg, branch=branch)
        labels, count = _periodic_components(mask.reshape(scan, scan, scan))
        labels = labels.ravel()
        minimum = channel_minimum(alpha, K, cfg, branch, scan=scan)
        best = int(labels[np.argmin(np.where(mask, values, np.inf))])
        found = []
        for label in range(1, count + 1):
            member = values[labels == label]
            lo = float(member.min())
            if label == best:
                lo = min(lo, minimum.value)
            found.append((lo, float(member.max())))
        intervals[alpha] = sorted(found)
        minima[alpha] = minimum
        if count > 1:
            logger.info(f"Channel {alpha} value set at K={K.tolist()} has {count} components")
    return BandStructure(
        K=K,
        channel_intervals=intervals,
        channel_minima=minima,
        three_body_band=three_body_band(K, cfg),
    )


def lower_bound(alpha: Channel, bands: BandStructure, cfg: SystemConfig) -> float:
    """tau_s^alpha(K) - mu_beta^0 - mu_gamma."""
    pair = PairIndex.of(alpha)
    minimum = bands.channel_minima.get(pair.alpha)
    tau_alpha = minimum.value if minimum is not None else bands.tau_ess
    return tau_alpha - mu_resonance(pair.beta, cfg) - cfg.mu_of(pair.gamma)


def small_momentum_delta(
    alpha: Channel, K: npt.ArrayLike, p: npt.ArrayLike, z: float, cfg: SystemConfig
):
    """
    Leading small-argument form of the shifted determinant at resonance:
    mu_alpha / (2 pi (l_beta + l_gamma)^(3/2)) [n_alpha |p|^2 + |K|^2 / M - 2z]^(1/2).
    """
    pair = PairIndex.of(alpha)
    K = np.asarray(K, dtype=float)
    p = np.asarray(p, dtype=float)
    inside = cfg.n_of(pair.alpha) * np.sum(p * p, axis=-1) + np.sum(K * K, axis=-1) / cfg.M - 2.0 * z
    scale = cfg.mu_of(pair.alpha) / (2.0 * math.pi * cfg.pair_sum(pair) ** 1.5)
    out = scale * np.sqrt(np.maximum(inside, 0.0))
    return float(out) if np.ndim(out) == 0 else out


def quadratic_symbol(
    alpha: Channel,
    beta: Channel,
    K: npt.ArrayLike,
    p: npt.ArrayLike,
    q: npt.ArrayLike,
    cfg: SystemConfig,
):
    """Small-argument form of the spectator three-body symbol E_ab(K; p, q)."""
    a, b = PairIndex.of(alpha).alpha, PairIndex.of(beta).alpha
    if a == b:
        raise ValueError("Spectator symbol needs two different channels")
    g = 6 - a - b
    la, lb, lg = cfg.l_of(a), cfg.l_of(b), cfg.l_of(g)
    K = np.asarray(K, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = 0.5 * (
        (la + lg) * np.sum(p * p, axis=-1)
        + 2.0 * lg * np.sum(p * q, axis=-1)
        + (lb + lg) * np.sum(q * q, axis=-1)
    ) + np.sum(K * K, axis=-1) / (2.0 * cfg.M)
    return float(out) if np.ndim(out) == 0 else out
