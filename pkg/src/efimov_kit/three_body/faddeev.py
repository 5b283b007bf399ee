"""
Faddeev-type kernel T(K, z) of the three-body fibre and Birman-Schwinger
counting.

For alpha != beta (gamma the third index) the kernel is

    T_ab(p, q) = sqrt(mu_a mu_b) (2 pi)^-3
                 Delta_a(K, p, z)^-1/2 Delta_b(K, q, z)^-1/2 / (E_ab(K; p, q) - z)

with E_ab(K; p, q) = eps_a(m_a K - p) + eps_b(m_b K - q) + eps_g(m_g K + p + q)
and Delta_a(K, p, z) = Delta_a((m_b + m_g) K + p, z - eps_a(m_a K - p)).
Diagonal blocks vanish. The number of eigenvalues of H(K) below z equals
the number of eigenvalues of T(K, z) above 1.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from tqdm import tqdm

from efimov_kit.errors import InvariantError
from efimov_kit.linalg.eigensolve import (
    SymmetricMatrix,
    bracketed_root,
    count_above,
    determinant_sym,
    max_eigenvalue,
)
from efimov_kit.model.core import Channel, PairIndex, SystemConfig, as_torus_point, epsilon
from efimov_kit.quadrature.torus import TORUS_VOLUME, GradedSphericalGrid
from efimov_kit.three_body.channels import (
    DEFAULT_SCAN,
    BandStructure,
    essential_spectrum,
    lower_bound,
    pair_momentum,
    spectator_energy,
)
from efimov_kit.two_body.branch import BoundStateBranch
from efimov_kit.two_body.determinant import DeterminantEvaluator, evaluator_for

logger = logging.getLogger(__name__)

PAIRS = ((1, 2), (1, 3), (2, 3))
# Distance below tau_ess used as the upper end of the ground-state search.
EDGE_OFFSET = 1e-6
DEFAULT_DELTAS = (1e-2, 1e-3, 1e-4, 1e-5)


@dataclass(frozen=True)
class GridSpec:
    """Per-channel graded grid parameters of the Faddeev discretization."""

    nodes_per_decade: float = 4.0
    n_core: int = 2
    n_polar: int = 4
    n_azimuth: int = 6
    n_far: int = 8
    inner_factor: float = 1e-2
    inner_floor: float = 1e-5
    r_outer: float = math.pi

    def __post_init__(self):
        if min(self.n_core, self.n_polar, self.n_azimuth, self.n_far) < 1:
            raise ValueError("Grid counts must be positive")
        if self.nodes_per_decade <= 0 or self.inner_factor <= 0 or self.inner_floor <= 0:
            raise ValueError("Grid scales must be positive")

    def refined(self) -> "GridSpec":
        """
        Radial nodes and directions doubled; the far field is kept, so a
        channel grid grows about fourfold.
        """
        return replace(
            self,
            nodes_per_decade=2.0 * self.nodes_per_decade,
            n_polar=2 * self.n_polar,
        )

    def inner_radius(self, gap: float) -> float:
        r = max(self.inner_factor * math.sqrt(max(gap, 0.0)), self.inner_floor)
        return min(r, 0.5 * self.r_outer)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass
class FaddeevMatrix:
    """Symmetrized discretization of T(K, z) with its grid metadata."""

    K: np.ndarray
    z: float
    grids: Dict[int, GradedSphericalGrid]
    matrix: np.ndarray
    offsets: Dict[int, Tuple[int, int]]
    deltas: Dict[int, np.ndarray]

    @property
    def order(self) -> int:
        return self.matrix.shape[0]

    def block(self, alpha: int, beta: int) -> np.ndarray:
        a0, a1 = self.offsets[alpha]
        b0, b1 = self.offsets[beta]
        return self.matrix[a0:a1, b0:b1]

    def descriptors(self) -> Dict[int, Dict[str, object]]:
        return {a: g.descriptor() for a, g in self.grids.items()}


def shifted_delta(
    alpha: Channel,
    K: npt.ArrayLike,
    p: npt.ArrayLike,
    z: float,
    cfg: SystemConfig,
    evaluator: Optional[DeterminantEvaluator] = None,
):
    """
    Delta_alpha((m_beta + m_gamma) K + p, z - eps_alpha(m_alpha K - p)).

    Raises:
        ValueError: If the shifted energy lies inside the pair band.
    """
    pair = PairIndex.of(alpha)
    ev = evaluator or evaluator_for(pair.alpha, cfg)
    p = as_torus_point(p)
    k = pair_momentum(pair, K, p, cfg)
    energy = z - spectator_energy(pair, K, p, cfg)
    return ev.delta(k, energy, cache=False)


def spectator_symbol(
    alpha: int, beta: int, K: np.ndarray, p: np.ndarray, q: np.ndarray, cfg: SystemConfig
) -> np.ndarray:
    """E_ab(K; p_i, q_j) for all node pairs, shape (len(p), len(q))."""
    gamma = 6 - alpha - beta
    ea = cfg.l_of(alpha) * epsilon(cfg.m_of(alpha) * K - p)
    eb = cfg.l_of(beta) * epsilon(cfg.m_of(beta) * K - q)
    a = cfg.m_of(gamma) * K + p
    cross = np.cos(a) @ np.cos(q).T - np.sin(a) @ np.sin(q).T
    eg = cfg.l_of(gamma) * (3.0 - cross)
    return ea[:, None] + eb[None, :] + eg


class FaddeevSolver:
    """
    Faddeev discretization of one fibre H(K).

    The band structure (and with it tau_ess and the grid centres) is computed
    once; each channel grid is graded around the channel minimizer with an
    inner radius tied to sqrt(tau_ess - z).
    """

    def __init__(
        self,
        K: npt.ArrayLike,
        cfg: SystemConfig,
        branches: Mapping[int, BoundStateBranch],
        spec: Optional[GridSpec] = None,
        max_workers: Optional[int] = None,
        bands: Optional[BandStructure] = None,
        seed: int = 0,
        scan: int = DEFAULT_SCAN,
    ):
        self.K = as_torus_point(K)
        self.cfg = cfg
        self.branches = branches
        self.spec = spec or GridSpec()
        self.max_workers = max_workers
        self.seed = seed
        self.scan = scan
        self._bands = bands
        self.evaluators = {a: evaluator_for(a, cfg) for a in (1, 2, 3)}

    @property
    def bands(self) -> BandStructure:
        if self._bands is None:
            self._bands = essential_spectrum(self.K, self.cfg, self.branches, self.scan)
        return self._bands

    @property
    def tau_ess(self) -> float:
        return self.bands.tau_ess

    @cached_property
    def centers(self) -> Dict[int, np.ndarray]:
        out = {}
        for a in (1, 2, 3):
            minimum = self.bands.channel_minima.get(a)
            out[a] = minimum.minimizer if minimum is not None else np.zeros(3)
        return out

    def grids(self, z: float) -> Dict[int, GradedSphericalGrid]:
        r_inner = self.spec.inner_radius(self.tau_ess - z)
        return {
            a: GradedSphericalGrid(
                center=tuple(float(c) for c in self.centers[a]),
                r_inner=r_inner,
                r_outer=self.spec.r_outer,
                nodes_per_decade=self.spec.nodes_per_decade,
                n_core=self.spec.n_core,
                n_polar=self.spec.n_polar,
                n_azimuth=self.spec.n_azimuth,
                n_far=self.spec.n_far,
            )
            for a in (1, 2, 3)
        }

    def deltas(self, z: float, grids: Mapping[int, GradedSphericalGrid]) -> Dict[int, np.ndarray]:
        out = {}
        for a, grid in grids.items():
            values = np.asarray(
                shifted_delta(a, self.K, grid.nodes, z, self.cfg, self.evaluators[a])
            )
            if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
                bad = int(np.count_nonzero(~(values > 0.0)))
                raise InvariantError(
                    f"Shifted determinant of channel {a} is not positive at {bad} node(s) "
                    f"for z={z}; shift the grid or lower z"
                )
            out[a] = values
        return out

    def _block(self, alpha, beta, z, grids, deltas) -> np.ndarray:
        ga, gb = grids[alpha], grids[beta]
        energy = spectator_symbol(alpha, beta, self.K, ga.nodes, gb.nodes, self.cfg)
        denominator = energy - z
        if np.any(denominator <= 0.0):
            raise InvariantError(f"Kernel denominator vanishes for z={z} above the band bottom")
        scale = math.sqrt(self.cfg.mu_of(alpha) * self.cfg.mu_of(beta)) / TORUS_VOLUME
        left = np.sqrt(ga.weights / deltas[alpha])
        right = np.sqrt(gb.weights / deltas[beta])
        return scale * left[:, None] * right[None, :] / denominator

    def assemble(
        self, z: float, grids: Optional[Mapping[int, GradedSphericalGrid]] = None
    ) -> FaddeevMatrix:
        """
        Dense symmetric matrix of T(K, z); off-diagonal blocks are built in
        parallel and written to disjoint ranges.
        """
        grids = dict(grids) if grids is not None else self.grids(z)
        deltas = self.deltas(z, grids)
        sizes = {a: len(grids[a].weights) for a in (1, 2, 3)}
        offsets, start = {}, 0
        for a in (1, 2, 3):
            offsets[a] = (start, start + sizes[a])
            start += sizes[a]
        matrix = np.zeros((start, start))

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = [
                (a, b, executor.submit(self._block, a, b, z, grids, deltas))
                for a, b in PAIRS
            ]
            for a, b, future in futures:
                block = future.result()
                a0, a1 = offsets[a]
                b0, b1 = offsets[b]
                matrix[a0:a1, b0:b1] = block
                matrix[b0:b1, a0:a1] = block.T

        logger.debug(f"Assembled T(K={self.K.tolist()}, z={z:.6g}) of order {start}")
        return FaddeevMatrix(
            K=self.K, z=float(z), grids=grids, matrix=matrix, offsets=offsets, deltas=deltas
        )

    def count(self, z: float) -> int:
        return count_above(SymmetricMatrix(self.assemble(z).matrix), 1.0)

    def determinant(self, z: float) -> float:
        m = self.assemble(z).matrix
        return determinant_sym(np.eye(m.shape[0]) - m)

    def largest_eigenvalue(
        self, z: float, grids: Optional[Mapping[int, GradedSphericalGrid]] = None
    ) -> float:
        return max_eigenvalue(self.assemble(z, grids).matrix, seed=self.seed)

    def ground_state(self, tol: float = 1e-8) -> Optional[float]:
        """
        Largest z < tau_ess with lambda_max(T(K, z)) = 1, or None.

        The grids are fixed at the upper end so that z -> lambda_max is
        monotone across the search.
        """
        tau = self.tau_ess
        hi = tau - EDGE_OFFSET * max(1.0, abs(tau))
        grids = self.grids(hi)
        f_hi = self.largest_eigenvalue(hi, grids) - 1.0
        if f_hi < 0.0:
            return None

        span = sum(self.cfg.mu) + 1.0
        lo = tau - span
        while self.largest_eigenvalue(lo, grids) >= 1.0:
            span *= 2.0
            lo = tau - span
            if span > 1e6:
                raise InvariantError("T(K, z) stays above 1 for arbitrarily low z")
        root = bracketed_root(lambda x: self.largest_eigenvalue(x, grids) - 1.0, lo, hi, tol)
        logger.debug(f"Ground state at K={self.K.tolist()}: {root:.10g}")
        return root


def assemble_faddeev(
    K: npt.ArrayLike,
    z: float,
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    spec: Optional[GridSpec] = None,
) -> FaddeevMatrix:
    return FaddeevSolver(K, cfg, branches, spec).assemble(z)


def count_N(
    K: npt.ArrayLike,
    z: float,
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    spec: Optional[GridSpec] = None,
) -> int:
    """Number of eigenvalues of H(K) below z, by inertia of T(K, z) - 1."""
    return FaddeevSolver(K, cfg, branches, spec).count(z)


def fredholm_det(
    K: npt.ArrayLike,
    z: float,
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    spec: Optional[GridSpec] = None,
) -> float:
    return FaddeevSolver(K, cfg, branches, spec).determinant(z)


def ground_state(
    K: npt.ArrayLike,
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    spec: Optional[GridSpec] = None,
) -> Optional[float]:
    return FaddeevSolver(K, cfg, branches, spec).ground_state()


def hilbert_schmidt_norm(faddeev: FaddeevMatrix) -> float:
    """Discrete Hilbert-Schmidt (Frobenius) norm of T(K, z)."""
    return float(np.linalg.norm(faddeev.matrix, "fro"))


def lower_bound_gap(
    K: npt.ArrayLike,
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    spec: Optional[GridSpec] = None,
    alpha: Optional[Channel] = None,
    solver: Optional[FaddeevSolver] = None,
) -> Tuple[float, float]:
    """
    The pair (tau_s^alpha(K) - mu_beta^0 - mu_gamma, tau_s(K)).

    tau_s(K) is the ground state when one exists below tau_ess, otherwise
    tau_ess. Without ``alpha`` the largest bound over the channels is used.
    """
    solver = solver or FaddeevSolver(K, cfg, branches, spec)
    bands = solver.bands
    channels = (1, 2, 3) if alpha is None else (PairIndex.of(alpha).alpha,)
    bound = max(lower_bound(a, bands, cfg) for a in channels)
    ground = solver.ground_state()
    tau_s = bands.tau_ess if ground is None else ground
    return bound, tau_s


def sign_changes(values: Sequence[float]) -> int:
    signs = np.sign(np.asarray(values, dtype=float))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


@dataclass
class FinitenessReport:
    """Counts just below tau_ess at two resolutions and the Hilbert-Schmidt norms."""

    K: np.ndarray
    tau_ess: float
    deltas: Tuple[float, ...]
    counts: List[int]
    refined_counts: List[int]
    hs_norm: float
    refined_hs_norm: float

    @property
    def stabilized(self) -> bool:
        return (
            len(set(self.counts[-2:])) == 1
            and len(set(self.refined_counts[-2:])) == 1
            and self.counts[-1] == self.refined_counts[-1]
        )

    def rows(self) -> List[Dict[str, object]]:
        out = []
        for d, n, m in zip(self.deltas, self.counts, self.refined_counts):
            out.append(
                {
                    "K1": float(self.K[0]),
                    "K2": float(self.K[1]),
                    "K3": float(self.K[2]),
                    "delta": float(d),
                    "z": float(self.tau_ess - d),
                    "N": int(n),
                    "N_refined": int(m),
                }
            )
        return out


def finiteness_probe(
    K: npt.ArrayLike,
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    spec: Optional[GridSpec] = None,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    scan: int = DEFAULT_SCAN,
    max_workers: Optional[int] = None,
    verbose: bool = False,
) -> FinitenessReport:
    """
    N(K, tau_ess(K) - delta) along a delta ladder at ``spec`` and
    ``spec.refined()``, plus the Hilbert-Schmidt norm just below tau_ess.
    """
    spec = spec or GridSpec()
    coarse = FaddeevSolver(K, cfg, branches, spec, max_workers=max_workers, scan=scan)
    fine = FaddeevSolver(
        K, cfg, branches, spec.refined(), max_workers=max_workers, bands=coarse.bands
    )
    tau = coarse.tau_ess
    deltas = tuple(sorted((float(d) for d in deltas), reverse=True))

    counts, refined = [], []
    for d in tqdm(deltas, desc="Finiteness ladder", unit="z", disable=not verbose):
        counts.append(coarse.count(tau - d))
        refined.append(fine.count(tau - d))

    edge = tau - 1e-10 * max(1.0, abs(tau))
    return FinitenessReport(
        K=coarse.K,
        tau_ess=tau,
        deltas=deltas,
        counts=counts,
        refined_counts=refined,
        hs_norm=hilbert_schmidt_norm(coarse.assemble(edge)),
        refined_hs_norm=hilbert_schmidt_norm(fine.assemble(edge)),
    )
