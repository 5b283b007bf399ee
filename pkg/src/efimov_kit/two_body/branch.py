"""
Tabulated two-body bound-state branch k -> z_alpha(k).

Delta_alpha(k, z) depends on k only through the amplitudes r(k_j), which are
even in every component and symmetric under permutations, so the branch is
solved on the wedge pi >= k1 >= k2 >= k3 >= 0 and unfolded. The interpolated
quantity is the deficit d(k) = E_min(k) - z_alpha(k) >= 0.

The deficit is analytic on the closed cube [0, pi]^3 of |k_j| values but its
even periodic extension has a kink at |k_j| = pi, so the nodes are
Chebyshev-Lobatto points of [0, pi] and a complete table is interpolated by
the tensor-product polynomial through them.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import numpy.typing as npt
import polars as pl
from scipy.interpolate import BarycentricInterpolator, RegularGridInterpolator
from tqdm import tqdm

from efimov_kit import report
from efimov_kit.errors import ConvergenceError, InvariantError
from efimov_kit.model.core import Channel, PairIndex, SystemConfig, as_torus_point, pair_band_edges
from efimov_kit.two_body.determinant import (
    EDGE_TOL,
    ROOT_TOL,
    DeterminantEvaluator,
    evaluator_for,
    resonance_flags,
)

logger = logging.getLogger(__name__)

CACHE_FORMAT = "efimov-kit-branch/2"
DEFAULT_RESOLUTION = 17
CHUNK_SIZE = 64
# |Delta(0, 0)| below this pins z_alpha(0) to the band edge.
ORIGIN_TOL = 1e-8

_MAX_ITER = 200
_EVAL_CHUNK = 8192

_branches: Dict[str, "BoundStateBranch"] = {}
_branches_lock = threading.Lock()


def branch_axis(n: int) -> np.ndarray:
    """Chebyshev-Lobatto nodes of [0, pi], ascending, both endpoints included."""
    if n < 2:
        raise ValueError(f"Branch resolution must be at least 2, got {n}")
    return 0.5 * np.pi * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))


@dataclass(eq=False)
class BoundStateBranch:
    """
    Deficit table on the cube [0, pi]^3 of |k_j| values.

    ``deficit`` holds NaN where h_alpha(k) has no eigenvalue below its band.
    A complete table is interpolated by its tensor-product polynomial, a table
    with gaps piecewise linearly.
    """

    alpha: int
    cfg: SystemConfig
    axis: np.ndarray
    deficit: np.ndarray
    tolerance: float = ROOT_TOL
    _method: str = field(init=False, repr=False)
    _basis: Optional[BarycentricInterpolator] = field(init=False, repr=False, default=None)
    _linear: Optional[RegularGridInterpolator] = field(init=False, repr=False, default=None)

    def __post_init__(self):
        n = len(self.axis)
        if self.deficit.shape != (n,) * 3:
            raise ValueError(
                f"Deficit table shape {self.deficit.shape} does not match axis of "
                f"length {n}"
            )
        finite = self.deficit[np.isfinite(self.deficit)]
        if np.any(finite < -self.tolerance):
            raise InvariantError("Bound state above the band bottom in branch table")
        if np.all(np.isfinite(self.deficit)) and n >= 3:
            self._method = "chebyshev"
            self._basis = BarycentricInterpolator(self.axis, np.eye(n))
        else:
            self._method = "linear"
            self._linear = RegularGridInterpolator((self.axis,) * 3, self.deficit, method="linear")

    @property
    def resolution(self) -> int:
        return len(self.axis)

    @property
    def interpolation(self) -> str:
        return self._method

    def _polynomial(self, points: np.ndarray) -> np.ndarray:
        n = self.resolution
        table = self.deficit.reshape(n, n * n)
        out = np.empty(len(points))
        for start in range(0, len(points), _EVAL_CHUNK):
            p = points[start:start + _EVAL_CHUNK]
            l1, l2, l3 = (np.atleast_2d(self._basis(p[:, j])) for j in range(3))
            partial = (l1 @ table).reshape(-1, n, n)
            out[start:start + len(p)] = np.einsum("pbc,pb,pc->p", partial, l2, l3)
        return out

    def deficit_at(self, k: npt.ArrayLike) -> np.ndarray:
        """Interpolated E_min(k) - z_alpha(k), NaN where no eigenvalue exists."""
        k = as_torus_point(k)
        points = np.abs(k).reshape(-1, 3)
        if self._basis is not None:
            d = self._polynomial(points)
        else:
            d = self._linear(points)
        d = d.reshape(k.shape[:-1])
        return np.where(np.isnan(d), np.nan, np.maximum(d, 0.0))

    def exists(self, k: npt.ArrayLike) -> np.ndarray:
        return np.isfinite(self.deficit_at(k))

    def __call__(self, k: npt.ArrayLike):
        """z_alpha(k) from the table; NaN outside the existence region."""
        k = as_torus_point(k)
        e_min, _ = pair_band_edges(self.alpha, k, self.cfg)
        z = e_min - self.deficit_at(k)
        return float(z) if np.ndim(z) == 0 else z

    def header(self) -> Dict[str, object]:
        return branch_header(self.alpha, self.cfg, self.resolution, self.tolerance)


def branch_header(alpha: int, cfg: SystemConfig, resolution: int, tol: float) -> Dict[str, object]:
    return {
        "format": CACHE_FORMAT,
        "l": list(cfg.l),
        "mu": list(cfg.mu),
        "alpha": int(alpha),
        "resolution": int(resolution),
        "tolerance": float(tol),
    }


def branch_key(header: Dict[str, object]) -> str:
    canonical = json.dumps(header, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def wedge_indices(n: int) -> np.ndarray:
    """Index triples i >= j >= k of the irreducible wedge, in lexicographic order."""
    return np.array(
        [(i, j, k) for i in range(n) for j in range(i + 1) for k in range(j + 1)],
        dtype=int,
    )


def _require_finite(values: np.ndarray, ks: np.ndarray, evaluator: DeterminantEvaluator) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise ConvergenceError(
            f"Non-finite Delta for channel {evaluator.pair.alpha} at "
            f"k={ks[np.flatnonzero(bad)[0]].tolist()}"
        )


def _solve_batch(
    evaluator: DeterminantEvaluator, ks: np.ndarray, tol: float
) -> np.ndarray:
    """
    Deficits E_min(k) - z(k) for a block of momenta, NaN where Delta(k, E_min)
    is not negative. All roots are bracketed together and refined with the
    Illinois variant of regula falsi.
    """
    e_min, e_max = pair_band_edges(evaluator.pair, ks, evaluator.cfg)
    out = np.full(len(ks), np.nan)
    edge = np.atleast_1d(evaluator.delta(ks, e_min, cache=False))
    active = np.flatnonzero(edge < -EDGE_TOL)
    if active.size == 0:
        return out

    k = ks[active]
    top = e_min[active]
    width = np.maximum(e_max[active] - top, evaluator.mu)
    limit = top - 10.0 * width
    step = 0.1 * width
    lo = top - step
    f_lo = np.atleast_1d(evaluator.delta(k, lo, cache=False))
    while np.any(f_lo <= 0.0):
        bad = f_lo <= 0.0
        step = np.where(bad, 2.0 * step, step)
        lo = top - step
        if np.any(lo < limit):
            raise InvariantError(
                f"Delta has no sign change in the widened bracket for channel "
                f"{evaluator.pair.alpha}"
            )
        f_lo[bad] = np.atleast_1d(evaluator.delta(k[bad], lo[bad], cache=False))

    _require_finite(f_lo, k, evaluator)
    hi = top.copy()
    f_hi = edge[active].copy()
    # log divergence at the band edge (a vanishing amplitude)
    inf = ~np.isfinite(f_hi)
    if np.any(inf):
        hi[inf] = top[inf] - tol
        f_hi[inf] = np.atleast_1d(evaluator.delta(k[inf], hi[inf], cache=False))
        pinned = inf & (f_hi >= 0.0)
        hi[pinned] = top[pinned] - 0.5 * tol
        lo[pinned] = hi[pinned]
    side = np.zeros(len(k), dtype=int)
    for _ in range(_MAX_ITER):
        open_ = hi - lo > tol
        if not np.any(open_):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        x = np.where(np.isfinite(x), np.clip(x, lo, hi), 0.5 * (lo + hi))
        fx = np.zeros_like(x)
        fx[open_] = np.atleast_1d(evaluator.delta(k[open_], x[open_], cache=False))
        _require_finite(fx, k, evaluator)

        right = open_ & (fx < 0.0)
        left = open_ & (fx > 0.0)
        exact = open_ & (fx == 0.0)
        hi = np.where(right, x, hi)
        f_hi = np.where(right, fx, f_hi)
        f_lo = np.where(right & (side == -1), 0.5 * f_lo, f_lo)
        lo = np.where(left, x, lo)
        f_lo = np.where(left, fx, f_lo)
        f_hi = np.where(left & (side == 1), 0.5 * f_hi, f_hi)
        side = np.where(right, -1, np.where(left, 1, side))
        lo = np.where(exact, x, lo)
        hi = np.where(exact, x, hi)
    else:
        raise ConvergenceError(
            f"Branch roots for channel {evaluator.pair.alpha} not converged "
            f"after {_MAX_ITER} iterations"
        )

    out[active] = top - 0.5 * (lo + hi)
    return out


def _unfold(n: int, wedge: np.ndarray, values: np.ndarray) -> np.ndarray:
    table = np.full((n, n, n), np.nan)
    for (i, j, k), v in zip(wedge, values):
        for perm in set(itertools.permutations((i, j, k))):
            table[perm] = v
    return table


def _cache_path(cache_dir: Union[str, Path], header: Dict[str, object]) -> Path:
    return Path(cache_dir) / f"branch-{branch_key(header)}.csv"


def write_branch(branch: BoundStateBranch, path: Union[str, Path]) -> Path:
    """Persist the wedge rows k1,k2,k3,z under a JSON header comment."""
    n = branch.resolution
    wedge = wedge_indices(n)
    ks = branch.axis[wedge]
    e_min, _ = pair_band_edges(branch.alpha, ks, branch.cfg)
    d = branch.deficit[tuple(wedge.T)]
    z = [None if np.isnan(v) else float(e - v) for e, v in zip(e_min, d)]
    df = pl.DataFrame(
        {"k1": ks[:, 0], "k2": ks[:, 1], "k3": ks[:, 2], "z": z},
        schema={"k1": pl.Float64, "k2": pl.Float64, "k3": pl.Float64, "z": pl.Float64},
    )
    comment = json.dumps(branch.header(), sort_keys=True, separators=(",", ":"))
    return report.write_csv(df, path, comment)


def read_branch(path: Union[str, Path], cfg: SystemConfig) -> BoundStateBranch:
    """
    Load a branch table written by :func:`write_branch`.

    Raises:
        ValueError: If the header is not a branch header or does not match ``cfg``.
    """
    comment, df = report.read_csv(path, schema_overrides={"z": pl.Float64})
    header = json.loads(comment)
    if header.get("format") != CACHE_FORMAT:
        raise ValueError(f"Not a branch table: {path}")
    expected = branch_header(header["alpha"], cfg, header["resolution"], header["tolerance"])
    if header != expected:
        raise ValueError(f"Branch table {path} belongs to another configuration")

    n = int(header["resolution"])
    axis = branch_axis(n)
    wedge = wedge_indices(n)
    if df.height != len(wedge):
        raise ValueError(f"Branch table {path} has {df.height} rows, expected {len(wedge)}")
    ks = df.select(["k1", "k2", "k3"]).to_numpy()
    if not np.allclose(ks, axis[wedge], rtol=0.0, atol=1e-12):
        raise ValueError(f"Branch table {path} has unexpected nodes")
    z = df["z"].fill_null(np.nan).to_numpy()
    e_min, _ = pair_band_edges(header["alpha"], ks, cfg)
    return BoundStateBranch(
        alpha=int(header["alpha"]),
        cfg=cfg,
        axis=axis,
        deficit=_unfold(n, wedge, e_min - z),
        tolerance=float(header["tolerance"]),
    )


def tabulate_branch(
    alpha: Channel,
    cfg: SystemConfig,
    resolution: int = DEFAULT_RESOLUTION,
    tol: float = ROOT_TOL,
    cache_dir: Optional[Union[str, Path]] = None,
    max_workers: Optional[int] = None,
    verbose: bool = False,
) -> BoundStateBranch:
    """
    Tabulate z_alpha(k) on Chebyshev-Lobatto nodes of |k_j| in [0, pi].

    Args:
        alpha: Channel index.
        cfg: System parameters; the branch through k = 0 needs mu_alpha = mu_alpha^0.
        resolution: Nodes per axis, including both endpoints.
        tol: Absolute root tolerance in energy.
        cache_dir: Directory for ``branch-<hash>.csv`` files; None keeps the
            table in memory only.
        max_workers: Threads used for the wedge chunks.
        verbose: Show a progress bar.

    Returns:
        The tabulated branch.
    """
    pair = PairIndex.of(alpha)
    if resolution < 2:
        raise ValueError(f"Branch resolution must be at least 2, got {resolution}")
    header = branch_header(pair.alpha, cfg, resolution, tol)
    key = branch_key(header)

    with _branches_lock:
        hit = _branches.get(key)
    if hit is not None:
        return hit

    path = _cache_path(cache_dir, header) if cache_dir else None
    if path is not None and path.exists():
        try:
            branch = read_branch(path, cfg)
            logger.info(f"Cache hit: branch alpha={pair.alpha} from {path}")
            with _branches_lock:
                _branches[key] = branch
            return branch
        except (ValueError, KeyError) as e:
            logger.warning(f"Ignoring unreadable branch cache {path}: {e}")

    if not resonance_flags(cfg)[pair.alpha - 1]:
        logger.debug(f"Tabulating branch alpha={pair.alpha} off resonance")

    evaluator = evaluator_for(pair.alpha, cfg)
    axis = branch_axis(resolution)
    wedge = wedge_indices(resolution)
    ks = axis[wedge]
    values = np.full(len(wedge), np.nan)
    chunks: List[np.ndarray] = np.array_split(
        np.arange(len(wedge)), max(1, -(-len(wedge) // CHUNK_SIZE))
    )

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {
            executor.submit(_solve_batch, evaluator, ks[idx], tol): idx
            for idx in chunks
        }
        with tqdm(
            total=len(wedge),
            desc=f"Branch alpha={pair.alpha}",
            unit="k",
            disable=not verbose,
        ) as pbar:
            for future in as_completed(futures):
                idx = futures[future]
                values[idx] = future.result()
                pbar.update(len(idx))

    origin = evaluator.delta(np.zeros(3), 0.0, cache=False)
    if abs(origin) < ORIGIN_TOL:
        values[0] = 0.0

    branch = BoundStateBranch(
        alpha=pair.alpha,
        cfg=cfg,
        axis=axis,
        deficit=_unfold(resolution, wedge, values),
        tolerance=tol,
    )
    missing = int(np.count_nonzero(np.isnan(values)))
    logger.debug(
        f"Branch alpha={pair.alpha}: {len(wedge)} wedge nodes, {missing} without eigenvalue"
    )
    if path is not None:
        write_branch(branch, path)
        logger.info(f"Wrote branch table {path}")

    with _branches_lock:
        _branches[key] = branch
    return branch


def clear_branch_cache() -> None:
    """Drop the in-memory branch tables."""
    with _branches_lock:
        _branches.clear()
