"""
Limiting operator S_r on (0, r) x S^2 and its eigenvalue counting function.

For alpha != beta the kernel is

    S_ab(x; t) = (2 pi)^-2 u_ab / (cosh(x + r_ab) + s_ab t),   t = <xi, eta>,

acting as S_ab(x - x', <xi, eta>). The kernel depends on the directions only
through their inner product, so it is diagonal in angular momentum: sector l
has kernel 2 pi int P_l(t) S_ab(y; t) dt and multiplicity 2l + 1.

Coefficients use l'_ag = l_a + l_g:

    u_ab = k_ab (l'_ag l'_bg / (n_a n_b))^(1/4)
    r_ab = log(l'_ag / l'_bg) / 2
    s_ab = l_g / sqrt(l'_ag l'_bg)
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy import integrate, linalg, special

from efimov_kit.errors import ConvergenceError, InvariantError
from efimov_kit.linalg.eigensolve import count_above
from efimov_kit.model.core import SystemConfig
from efimov_kit.quadrature.torus import gauss_legendre
from efimov_kit.two_body.determinant import resonance_flags

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]
ORDERED_PAIRS: Tuple[Pair, ...] = ((1, 2), (1, 3), (2, 1), (2, 3), (3, 1), (3, 2))

DEFAULT_ELL_MAX = 40
DEFAULT_NODES = 600
DEFAULT_ORDER = 64
_NORM_HALF_WIDTH = 60.0
_NORM_POINTS = 4001


def _third(a: int, b: int) -> int:
    return 6 - a - b


def _joint(cfg: SystemConfig, a: int, b: int, reading: str) -> float:
    if reading == "sum":
        return cfg.l_of(a) + cfg.l_of(b)
    if reading == "ratio":
        return cfg.ratio(a, b)
    raise ValueError(f"Unknown coefficient reading: {reading}")


def sobolev_parameters(
    cfg: SystemConfig, reading: str = "sum"
) -> Dict[Pair, Tuple[float, float, float]]:
    """
    Raw (u, r, s) per ordered pair before resonance gating.

    ``reading="ratio"`` interprets l_ag as l_a / (l_a + l_g); it is kept to
    document that it produces s >= 1, for which the kernel is singular.
    """
    out = {}
    for a, b in ORDERED_PAIRS:
        g = _third(a, b)
        lag = _joint(cfg, a, g, reading)
        lbg = _joint(cfg, b, g, reading)
        u = (lag * lbg / (cfg.n_of(a) * cfg.n_of(b))) ** 0.25
        r = 0.5 * math.log(lag / lbg)
        s = cfg.l_of(g) / math.sqrt(lag * lbg)
        out[(a, b)] = (u, r, s)
    return out


@dataclass(frozen=True)
class SobolevModel:
    """Coefficients of S_r for every ordered channel pair."""

    u: Dict[Pair, float]
    r: Dict[Pair, float]
    s: Dict[Pair, float]
    k: Dict[Pair, int]
    resonant: Tuple[bool, bool, bool]

    def __post_init__(self):
        for pair in ORDERED_PAIRS:
            if not 0.0 <= self.s[pair] < 1.0:
                raise InvariantError(
                    f"s{pair} = {self.s[pair]:.6g} outside [0, 1); the kernel is singular"
                )
            b, a = pair[1], pair[0]
            if not math.isclose(self.r[pair], -self.r[(b, a)], abs_tol=1e-14):
                raise InvariantError(f"r is not antisymmetric for {pair}")
            if not math.isclose(self.u[pair], self.u[(b, a)], rel_tol=1e-14):
                raise InvariantError(f"u is not symmetric for {pair}")

    @property
    def is_zero(self) -> bool:
        return all(self.k[p] == 0 for p in ORDERED_PAIRS)

    def kernel(self, a: int, b: int, y: npt.ArrayLike, t: npt.ArrayLike) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        pair = (a, b)
        return (
            self.k[pair]
            * self.u[pair]
            / (4.0 * math.pi**2)
            / (np.cosh(y + self.r[pair]) + self.s[pair] * t)
        )

    def to_dict(self) -> Dict[str, object]:
        return {
            f"{a}{b}": {"u": self.u[(a, b)], "r": self.r[(a, b)], "s": self.s[(a, b)], "k": self.k[(a, b)]}
            for a, b in ORDERED_PAIRS
        } | {"resonant": list(self.resonant)}


def sobolev_coefficients(
    cfg: SystemConfig,
    resonant: Optional[Sequence[bool]] = None,
    reading: str = "sum",
) -> SobolevModel:
    """
    SobolevModel for ``cfg``; k_ab = 1 iff channels a and b are both resonant.

    Args:
        cfg: System parameters.
        resonant: Per-channel resonance flags; defaults to mu_a == mu_a^0.
        reading: Interpretation of l_ag, see :func:`sobolev_parameters`.

    Raises:
        InvariantError: If some s_ab is not in [0, 1).
    """
    flags = tuple(bool(f) for f in (resonant if resonant is not None else resonance_flags(cfg)))
    if len(flags) != 3:
        raise ValueError(f"Need three resonance flags, got {len(flags)}")
    params = sobolev_parameters(cfg, reading)
    k = {(a, b): int(flags[a - 1] and flags[b - 1]) for a, b in ORDERED_PAIRS}
    return SobolevModel(
        u={p: k[p] * v[0] for p, v in params.items()},
        r={p: v[1] for p, v in params.items()},
        s={p: v[2] for p, v in params.items()},
        k=k,
        resonant=flags,
    )


def dilation_prefactor(alpha: int, beta: int, cfg: SystemConfig) -> float:
    """
    u_ab assembled from D_ab = l'_ag^(3/4) l'_bg^(3/4) / (2 pi^2), the factor
    (n_a n_b)^(-1/4), the Jacobian 1 / (2 sqrt(l'_ag l'_bg)) of the
    logarithmic variables and the (2 pi)^2 normalization of the kernel.
    """
    g = _third(alpha, beta)
    lag = cfg.l_of(alpha) + cfg.l_of(g)
    lbg = cfg.l_of(beta) + cfg.l_of(g)
    d = (lag * lbg) ** 0.75 / (2.0 * math.pi**2)
    jacobian = 1.0 / (2.0 * math.sqrt(lag * lbg))
    return d * (cfg.n_of(alpha) * cfg.n_of(beta)) ** -0.25 * jacobian * 4.0 * math.pi**2


def cutoff_parameter(K: npt.ArrayLike, z: float, cfg: SystemConfig) -> float:
    """r = |log(|K|^2 / (2M) + |z|)| / 2."""
    K = np.asarray(K, dtype=float)
    value = float(np.dot(K, K)) / (2.0 * cfg.M) + abs(z)
    if value <= 0.0:
        raise ValueError("Cutoff parameter diverges at K = 0, z = 0")
    return 0.5 * abs(math.log(value))


@lru_cache(maxsize=None)
def _legendre_rule(ell: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    t, w = gauss_legendre(order)
    return t, w * special.eval_legendre(ell, t)


def sector_symbol(
    ell: int, alpha: int, beta: int, model: SobolevModel, order: int = DEFAULT_ORDER
) -> Callable[[npt.ArrayLike], np.ndarray]:
    """y -> 2 pi int_{-1}^{1} S_ab(y; t) P_l(t) dt, by Gauss-Legendre of ``order``."""
    if ell < 0:
        raise ValueError(f"Angular momentum must be non-negative, got {ell}")
    t, w = _legendre_rule(ell, order)

    def symbol(y: npt.ArrayLike) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        values = model.kernel(alpha, beta, y[..., None], t)
        return 2.0 * math.pi * (values @ w)

    return symbol


def sector_norm_bound(ell: int, model: SobolevModel, order: int = DEFAULT_ORDER) -> float:
    """Schur bound max_a sum_b int |S^(l)_ab(y)| dy of the sector operator."""
    y = np.linspace(-_NORM_HALF_WIDTH, _NORM_HALF_WIDTH, _NORM_POINTS)
    rows = []
    for a in (1, 2, 3):
        total = 0.0
        for b in (1, 2, 3):
            if a == b or model.k[(a, b)] == 0:
                continue
            total += integrate.simpson(np.abs(sector_symbol(ell, a, b, model, order)(y)), x=y)
        rows.append(total)
    return max(rows)


def sector_matrix(
    ell: int, r: float, model: SobolevModel, n: int = DEFAULT_NODES, order: int = DEFAULT_ORDER
) -> np.ndarray:
    """
    Nystrom matrix of sector ``ell`` on (0, r): midpoint nodes, weight h,
    one Toeplitz block per channel pair.
    """
    h = r / n
    offsets = h * np.arange(n)
    matrix = np.zeros((3 * n, 3 * n))
    for a, b in ORDERED_PAIRS:
        if model.k[(a, b)] == 0:
            continue
        symbol = sector_symbol(ell, a, b, model, order)
        block = h * linalg.toeplitz(symbol(offsets), symbol(-offsets))
        matrix[(a - 1) * n:a * n, (b - 1) * n:b * n] = block
    return matrix


def count_sobolev(
    lam: float,
    r: float,
    model: SobolevModel,
    ell_max: int = DEFAULT_ELL_MAX,
    n: int = DEFAULT_NODES,
    order: int = DEFAULT_ORDER,
    max_workers: Optional[int] = None,
) -> int:
    """
    n(lam, S_r) = sum_l (2l + 1) n(lam, S_r^(l)).

    Sectors are added while their Schur bound is at least ``lam``.

    Raises:
        ConvergenceError: If the bound is still above ``lam`` at ``ell_max``.
    """
    if lam <= 0 or r <= 0:
        raise ValueError(f"Need lam > 0 and r > 0, got {lam} and {r}")
    if model.is_zero:
        return 0

    sectors = []
    for ell in range(ell_max + 1):
        if sector_norm_bound(ell, model, order) < lam:
            break
        sectors.append(ell)
    else:
        raise ConvergenceError(
            f"Sector bound still above {lam} at l_max={ell_max}; raise l_max"
        )

    def sector_count(ell: int) -> int:
        return count_above(sector_matrix(ell, r, model, n, order), lam)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        counts = list(executor.map(sector_count, sectors))
    total = sum((2 * ell + 1) * c for ell, c in zip(sectors, counts))
    logger.debug(f"n({lam}, S_r) at r={r}: {total} over sectors {sectors}")
    return total
