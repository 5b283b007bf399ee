"""
Masses, couplings, lattice dispersion and the relative-coordinate maps.

All functions are vectorized over leading axes: a torus point is an array
whose last axis has length 3, and components are reduced to (-pi, pi].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import optimize

from efimov_kit.errors import ConfigurationError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

TorusPoint = npt.NDArray[np.float64]

_SCAN_POINTS = 2048


def reduce_torus(p: npt.ArrayLike) -> TorusPoint:
    """Reduce every component to the half-open interval (-pi, pi]."""
    p = np.asarray(p, dtype=float)
    reduced = np.mod(p + np.pi, TWO_PI) - np.pi
    return np.where(reduced <= -np.pi, reduced + TWO_PI, reduced)


def as_torus_point(p: npt.ArrayLike) -> TorusPoint:
    """Validate the trailing axis and reduce to the torus."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (3,):
        raise ValueError(f"Torus points need a trailing axis of 3, got {p.shape}")
    return reduce_torus(p)


@dataclass(frozen=True)
class PairIndex:
    """Channel label alpha with the complementary pair (beta, gamma)."""

    alpha: int

    def __post_init__(self):
        if self.alpha not in (1, 2, 3):
            raise ConfigurationError(
                f"Pair index must be 1, 2 or 3, got {self.alpha}"
            )

    @property
    def beta(self) -> int:
        return self.alpha % 3 + 1

    @property
    def gamma(self) -> int:
        return self.beta % 3 + 1

    @classmethod
    def of(cls, value: Union[int, "PairIndex"]) -> "PairIndex":
        return value if isinstance(value, PairIndex) else cls(int(value))


Channel = Union[int, PairIndex]


@dataclass(frozen=True)
class SystemConfig:
    """
    Inverse-mass parameters l_alpha and pair couplings mu_alpha.

    Derived kinematic coefficients are computed once at construction:
    ``M = sum 1/l``, ``m_alpha = 1/(l_alpha M)`` and
    ``n_alpha = (l1 l2 + l1 l3 + l2 l3)/(l_beta + l_gamma)``.
    """

    l1: float
    l2: float
    l3: float
    mu1: float
    mu2: float
    mu3: float
    strict_hypothesis: bool = False

    l: Tuple[float, float, float] = field(init=False, repr=False, compare=False)
    mu: Tuple[float, float, float] = field(init=False, repr=False, compare=False)
    M: float = field(init=False, repr=False, compare=False)
    m: Tuple[float, float, float] = field(init=False, repr=False, compare=False)
    n: Tuple[float, float, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        l = (float(self.l1), float(self.l2), float(self.l3))
        mu = (float(self.mu1), float(self.mu2), float(self.mu3))
        if not all(np.isfinite(l)) or min(l) <= 0:
            raise ConfigurationError(f"Mass parameters must be positive: {l}")
        if not all(np.isfinite(mu)) or min(mu) <= 0:
            raise ConfigurationError(f"Couplings must be positive: {mu}")

        distinct = len(set(l)) == 3
        if self.strict_hypothesis and not distinct:
            raise ConfigurationError(
                f"Mass parameters must be pairwise distinct: {l}"
            )
        if not distinct:
            logger.warning(
                f"Mass parameters {l} are not pairwise distinct; "
                "running in symmetric mode"
            )

        M = sum(1.0 / x for x in l)
        m = tuple(1.0 / (x * M) for x in l)
        sigma = l[0] * l[1] + l[0] * l[2] + l[1] * l[2]
        n = tuple(
            sigma / (l[PairIndex(a).beta - 1] + l[PairIndex(a).gamma - 1])
            for a in (1, 2, 3)
        )

        object.__setattr__(self, "l", l)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)

    def l_of(self, index: int) -> float:
        return self.l[index - 1]

    def mu_of(self, index: int) -> float:
        return self.mu[index - 1]

    def m_of(self, index: int) -> float:
        return self.m[index - 1]

    def n_of(self, index: int) -> float:
        return self.n[index - 1]

    def pair_sum(self, alpha: Channel) -> float:
        """l_beta + l_gamma for the pair complementary to alpha."""
        pair = PairIndex.of(alpha)
        return self.l_of(pair.beta) + self.l_of(pair.gamma)

    def ratio(self, a: int, b: int) -> float:
        """l_ab = l_a / (l_a + l_b)."""
        return self.l_of(a) / (self.l_of(a) + self.l_of(b))

    def with_couplings(self, mu1: float, mu2: float, mu3: float) -> "SystemConfig":
        return replace(self, mu1=mu1, mu2=mu2, mu3=mu3)

    def to_dict(self) -> Dict[str, object]:
        return {
            "l": list(self.l),
            "mu": list(self.mu),
            "strict_hypothesis": self.strict_hypothesis,
        }


def epsilon(p: npt.ArrayLike) -> np.ndarray:
    """Lattice dispersion sum_i (1 - cos p_i)."""
    p = np.asarray(p, dtype=float)
    return np.sum(1.0 - np.cos(p), axis=-1)


def epsilon_alpha(alpha: Channel, p: npt.ArrayLike, cfg: SystemConfig) -> np.ndarray:
    return cfg.l_of(PairIndex.of(alpha).alpha) * epsilon(p)


def pair_dispersion(
    alpha: Channel, k: npt.ArrayLike, q: npt.ArrayLike, cfg: SystemConfig
) -> np.ndarray:
    """Two-body symbol E_k(q) of the pair (beta, gamma) at pair momentum k."""
    pair = PairIndex.of(alpha)
    b, g = pair.beta, pair.gamma
    k = np.asarray(k, dtype=float)
    q = np.asarray(q, dtype=float)
    return epsilon_alpha(b, cfg.ratio(g, b) * k + q, cfg) + epsilon_alpha(
        g, cfg.ratio(b, g) * k - q, cfg
    )


def inverse_coordinate_map(
    alpha: Channel,
    K: npt.ArrayLike,
    q: npt.ArrayLike,
    p: npt.ArrayLike,
    cfg: SystemConfig,
) -> Tuple[TorusPoint, TorusPoint, TorusPoint]:
    """
    Particle momenta (k_alpha, k_beta, k_gamma) for total momentum K and
    relative coordinates (q, p) of channel alpha.

    The returned triple is ordered by role, not by particle number.
    """
    pair = PairIndex.of(alpha)
    a, b, g = pair.alpha, pair.beta, pair.gamma
    K = np.asarray(K, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    k_a = cfg.m_of(a) * K - p
    k_b = cfg.m_of(b) * K + cfg.ratio(g, b) * p + q
    k_g = cfg.m_of(g) * K + cfg.ratio(b, g) * p - q
    return reduce_torus(k_a), reduce_torus(k_b), reduce_torus(k_g)


def forward_coordinate_map(
    alpha: Channel,
    k_alpha: npt.ArrayLike,
    k_beta: npt.ArrayLike,
    k_gamma: npt.ArrayLike,
    cfg: SystemConfig,
) -> Tuple[TorusPoint, TorusPoint]:
    """Relative coordinates (q, p) of channel alpha from particle momenta."""
    pair = PairIndex.of(alpha)
    a, b, g = pair.alpha, pair.beta, pair.gamma
    k_a = np.asarray(k_alpha, dtype=float)
    k_b = np.asarray(k_beta, dtype=float)
    k_g = np.asarray(k_gamma, dtype=float)
    q = cfg.ratio(b, g) * k_b - cfg.ratio(g, b) * k_g
    p = cfg.m_of(a) * (k_b + k_g) - (cfg.m_of(b) + cfg.m_of(g)) * k_a
    return reduce_torus(q), reduce_torus(p)


def three_body_symbol(
    alpha: Channel,
    K: npt.ArrayLike,
    q: npt.ArrayLike,
    p: npt.ArrayLike,
    cfg: SystemConfig,
) -> np.ndarray:
    """Free three-body energy E(K; q, p) in the coordinates of channel alpha."""
    pair = PairIndex.of(alpha)
    k_a, k_b, k_g = inverse_coordinate_map(pair, K, q, p, cfg)
    return (
        epsilon_alpha(pair.alpha, k_a, cfg)
        + epsilon_alpha(pair.beta, k_b, cfg)
        + epsilon_alpha(pair.gamma, k_g, cfg)
    )


def _cosine_form(alpha: Channel, k: npt.ArrayLike, cfg: SystemConfig):
    pair = PairIndex.of(alpha)
    lb, lg = cfg.l_of(pair.beta), cfg.l_of(pair.gamma)
    k = np.asarray(k, dtype=float)
    x = cfg.ratio(pair.gamma, pair.beta) * k
    y = cfg.ratio(pair.beta, pair.gamma) * k
    a = lb * np.cos(x) + lg * np.cos(y)
    b = lg * np.sin(y) - lb * np.sin(x)
    return a, b


def amplitudes(alpha: Channel, k: npt.ArrayLike, cfg: SystemConfig) -> np.ndarray:
    """r(k_j) = sqrt(l_b^2 + l_g^2 + 2 l_b l_g cos k_j), componentwise."""
    pair = PairIndex.of(alpha)
    lb, lg = cfg.l_of(pair.beta), cfg.l_of(pair.gamma)
    k = np.asarray(k, dtype=float)
    r2 = lb * lb + lg * lg + 2.0 * lb * lg * np.cos(k)
    return np.sqrt(np.maximum(r2, 0.0))


def minimum_point(
    alpha: Channel, k: npt.ArrayLike, cfg: SystemConfig
) -> Tuple[TorusPoint, np.ndarray]:
    """
    Minimizer p_alpha(k) of q -> E_k(q) and the amplitudes r_alpha(k_j).

    Per component E = (l_b + l_g) - a cos q - b sin q with
    a = l_b cos(l_gb k) + l_g cos(l_bg k) and
    b = l_g sin(l_bg k) - l_b sin(l_gb k), so the minimizer is atan2(b, a).
    Where the amplitude vanishes (l_b = l_g, k_j = pi) every q_j minimizes
    and the component is reported as 0.
    """
    a, b = _cosine_form(alpha, k, cfg)
    r = amplitudes(alpha, k, cfg)
    p = np.where(r > 0.0, np.arctan2(b, a), 0.0)
    return reduce_torus(p), r


def pair_band_edges(
    alpha: Channel, k: npt.ArrayLike, cfg: SystemConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """Bottom and top of the continuous spectrum of the pair at momentum k."""
    total = 3.0 * cfg.pair_sum(alpha)
    spread = np.sum(amplitudes(alpha, k, cfg), axis=-1)
    return total - spread, total + spread


def _component_extremum(f, sign: float) -> float:
    grid = np.linspace(-np.pi, np.pi, _SCAN_POINTS, endpoint=False)
    values = sign * f(grid)
    i = int(np.argmin(values))
    h = TWO_PI / _SCAN_POINTS
    res = optimize.minimize_scalar(
        lambda x: sign * f(x),
        bounds=(grid[i] - h, grid[i] + h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(sign * min(res.fun, values[i]))


def three_body_band(K: npt.ArrayLike, cfg: SystemConfig) -> Tuple[float, float]:
    """
    Edges E_min(K), E_max(K) of the free three-body symbol on the fibre K.

    The symbol separates into components; each component is the channel-1
    form l_1(1 - cos(m_1 K - p)) + (l_2 + l_3) -+ r((m_2 + m_3) K + p),
    optimized over p.
    """
    K = as_torus_point(K)
    l1 = cfg.l_of(1)
    lb, lg = cfg.l_of(2), cfg.l_of(3)
    m1, rest = cfg.m_of(1), cfg.m_of(2) + cfg.m_of(3)

    def r(x):
        return np.sqrt(np.maximum(lb * lb + lg * lg + 2 * lb * lg * np.cos(x), 0.0))

    low = high = 0.0
    for kj in K:
        def lower(p, kj=kj):
            return l1 * (1 - np.cos(m1 * kj - p)) + lb + lg - r(rest * kj + p)

        def upper(p, kj=kj):
            return l1 * (1 - np.cos(m1 * kj - p)) + lb + lg + r(rest * kj + p)

        low += _component_extremum(lower, 1.0)
        high += _component_extremum(upper, -1.0)
    return low, high
