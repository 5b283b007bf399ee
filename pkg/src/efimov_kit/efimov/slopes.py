"""
Slope fits for the logarithmic growth of eigenvalue counts.

Three routes estimate the same constant U_0:

- ``sobolev``: n(1, S_r) against r, U = slope / 2;
- ``energy``: N(0, z) against 2 r(0, z) = |log |z||, U = slope;
- ``momentum``: N(K, 0) against 2 r(K, 0) = 2 |log |K|| + log 2M, U = slope.

r is the cutoff parameter of the Sobolev model, so all three routes share
one abscissa up to the factor 2 carried by ``sobolev``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from tqdm import tqdm

from efimov_kit.errors import ConvergenceError
from efimov_kit.efimov.sobolev import (
    DEFAULT_ELL_MAX,
    DEFAULT_NODES,
    DEFAULT_ORDER,
    SobolevModel,
    count_sobolev,
    cutoff_parameter,
)
from efimov_kit.model.core import SystemConfig
from efimov_kit.three_body.channels import DEFAULT_SCAN
from efimov_kit.three_body.faddeev import FaddeevSolver, GridSpec
from efimov_kit.two_body.branch import BoundStateBranch

logger = logging.getLogger(__name__)

ROUTE_FACTORS = {"sobolev": 0.5, "energy": 1.0, "momentum": 1.0}
DEFAULT_R_LADDER = (10.0, 15.0, 20.0, 30.0, 40.0)
DEFAULT_Z_LADDER = (-1e-1, -1e-2, -1e-3, -1e-4, -1e-5)
DEFAULT_K_LADDER = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)


@dataclass(frozen=True)
class SlopeFit:
    """Unweighted least-squares line through (abscissa, count) points."""

    route: str
    abscissae: Tuple[float, ...]
    counts: Tuple[int, ...]
    slope: float
    intercept: float
    residual: float
    factor: float

    @property
    def estimate(self) -> float:
        return self.slope * self.factor

    @classmethod
    def fit(cls, route: str, abscissae: Sequence[float], counts: Sequence[int]) -> "SlopeFit":
        """
        Raises:
            ValueError: On fewer than four points, non-increasing abscissae
                or an unknown route.
        """
        if route not in ROUTE_FACTORS:
            raise ValueError(f"Unknown slope route: {route}")
        x = np.asarray(abscissae, dtype=float)
        y = np.asarray(counts, dtype=float)
        if len(x) < 4 or len(x) != len(y):
            raise ValueError(f"Slope fits need at least 4 matched points, got {len(x)}")
        if np.any(np.diff(x) <= 0):
            raise ValueError("Slope fit abscissae must be strictly increasing")
        design = np.stack([x, np.ones_like(x)], axis=1)
        (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
        residual = float(np.linalg.norm(design @ np.array([slope, intercept]) - y))
        return cls(
            route=route,
            abscissae=tuple(float(v) for v in x),
            counts=tuple(int(v) for v in counts),
            slope=float(slope),
            intercept=float(intercept),
            residual=residual,
            factor=ROUTE_FACTORS[route],
        )

    def rows(self) -> List[Dict[str, object]]:
        return [
            {
                "route": self.route,
                "abscissa": a,
                "count": c,
                "slope": self.slope,
                "intercept": self.intercept,
                "residual": self.residual,
                "estimate": self.estimate,
            }
            for a, c in zip(self.abscissae, self.counts)
        ]


def estimate_U(
    lam: float,
    model: SobolevModel,
    r_ladder: Sequence[float] = DEFAULT_R_LADDER,
    ell_max: int = DEFAULT_ELL_MAX,
    n: int = DEFAULT_NODES,
    order: int = DEFAULT_ORDER,
    max_workers: Optional[int] = None,
    verbose: bool = False,
) -> SlopeFit:
    """
    U(lam) as half the slope of r -> n(lam, S_r); U_0 = U(1).

    Raises:
        ValueError: If the ladder spans less than a factor 4.
        ConvergenceError: If the slope is not positive for a non-zero model.
    """
    ladder = sorted(float(r) for r in r_ladder)
    if ladder[0] <= 0 or ladder[-1] < 4.0 * ladder[0]:
        raise ValueError(f"r ladder must be positive and span a factor 4, got {ladder}")
    counts = [
        count_sobolev(lam, r, model, ell_max=ell_max, n=n, order=order, max_workers=max_workers)
        for r in tqdm(ladder, desc=f"Sobolev counts (lam={lam})", unit="r", disable=not verbose)
    ]
    fit = SlopeFit.fit("sobolev", ladder, counts)
    if fit.slope <= 0 and not model.is_zero:
        raise ConvergenceError(f"Non-positive slope {fit.slope:.6g} of n({lam}, S_r)")
    logger.debug(f"U({lam}) = {fit.estimate:.6g} from counts {counts}")
    return fit


def fit_counting_slopes(
    cfg: SystemConfig,
    branches: Mapping[int, BoundStateBranch],
    z_ladder: Sequence[float] = DEFAULT_Z_LADDER,
    K_ladder: Sequence[float] = DEFAULT_K_LADDER,
    spec: Optional[GridSpec] = None,
    direction: npt.ArrayLike = (1.0, 0.0, 0.0),
    max_workers: Optional[int] = None,
    scan: int = DEFAULT_SCAN,
    verbose: bool = False,
) -> Tuple[SlopeFit, SlopeFit]:
    """
    Slopes of N(0, z) and N(K, 0) against twice the cutoff parameter r,
    with K = |K| * direction / |direction|.
    """
    spec = spec or GridSpec()
    unit = np.asarray(direction, dtype=float)
    unit = unit / np.linalg.norm(unit)

    zs = sorted((float(z) for z in z_ladder), key=lambda z: abs(math.log(abs(z))))
    origin = FaddeevSolver(np.zeros(3), cfg, branches, spec, max_workers=max_workers, scan=scan)
    z_counts = [
        origin.count(z)
        for z in tqdm(zs, desc="N(0, z)", unit="z", disable=not verbose)
    ]
    energy = SlopeFit.fit("energy", [2.0 * cutoff_parameter(origin.K, z, cfg) for z in zs], z_counts)

    sizes = sorted((float(k) for k in K_ladder), reverse=True)
    k_counts = []
    for size in tqdm(sizes, desc="N(K, 0)", unit="K", disable=not verbose):
        solver = FaddeevSolver(size * unit, cfg, branches, spec, max_workers=max_workers, scan=scan)
        k_counts.append(solver.count(0.0))
    abscissae = [2.0 * cutoff_parameter(size * unit, 0.0, cfg) for size in sizes]
    momentum = SlopeFit.fit("momentum", abscissae, k_counts)

    logger.debug(f"N(0, z) counts {z_counts}; N(K, 0) counts {k_counts}")
    return energy, momentum
