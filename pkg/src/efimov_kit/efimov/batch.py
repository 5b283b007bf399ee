"""
Efimov command job: the constant U_0 by three independent routes.
"""

from itertools import combinations
from typing import Dict, Optional

import polars as pl

from efimov_kit.efimov.slopes import SlopeFit, estimate_U, fit_counting_slopes
from efimov_kit.efimov.sobolev import sobolev_coefficients
from efimov_kit.job import BaseJob
from efimov_kit.report import write_csv, write_json


def agreement_ratio(a: float, b: float) -> Optional[float]:
    """a / b, or None when b vanishes."""
    return a / b if b != 0.0 else None


class EfimovJob(BaseJob):
    """
    Runs the Sobolev r-route, the energy route N(0, z) and the momentum route
    N(K, 0), then compares the three estimates of U_0 pairwise against
    ``agreement_tol``.

    Outputs ``efimov.json`` and ``slopes.csv``.
    """

    TITLE = "Efimov"

    def execute(self) -> None:
        s = self.config.sobolev
        ladders = self.config.ladders
        model = sobolev_coefficients(self.system)
        if model.is_zero:
            self.logger.info("Fewer than two resonant channels: the limiting operator vanishes")

        sobolev = estimate_U(
            s.lam,
            model,
            ladders.r,
            ell_max=s.ell_max,
            n=s.n,
            order=s.order,
            max_workers=self.max_workers,
            verbose=self.verbose,
        )
        energy, momentum = fit_counting_slopes(
            self.system,
            self.branches(),
            ladders.z,
            ladders.K,
            spec=self.config.grid,
            direction=ladders.direction,
            max_workers=self.max_workers,
            scan=self.config.quadrature.scan,
            verbose=self.verbose,
        )
        self.fits: Dict[str, SlopeFit] = {f.route: f for f in (sobolev, energy, momentum)}

        tol = self.config.agreement_tol
        self.ratios = {}
        agree = {}
        for a, b in combinations(self.fits, 2):
            ratio = agreement_ratio(self.fits[a].estimate, self.fits[b].estimate)
            key = f"{a}/{b}"
            self.ratios[key] = ratio
            if ratio is None:
                agree[key] = self.fits[a].estimate == 0.0
            else:
                agree[key] = abs(ratio - 1.0) <= tol
            if not agree[key]:
                self.logger.warning(f"Routes {key} disagree: ratio {ratio}")

        summary = {
            "config_hash": self.config_hash,
            "grid_hash": self.config.grid.digest(),
            "sobolev_hash": self.config.digest("sobolev"),
            "model": model.to_dict(),
            "lambda": s.lam,
            "agreement_tol": tol,
            "routes": {
                route: {
                    "U0": fit.estimate,
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "residual": fit.residual,
                    "factor": fit.factor,
                }
                for route, fit in self.fits.items()
            },
            "ratios": self.ratios,
            "agree": agree,
        }
        self._record(write_json(summary, self.output_dir / "efimov.json"))
        rows = [row for fit in self.fits.values() for row in fit.rows()]
        self._record(write_csv(pl.DataFrame(rows), self.output_dir / "slopes.csv", self.comment))

    def _summary_lines(self):
        lines = [f"U0 ({route}):{' ' * (10 - len(route))}{fit.estimate:.6g}" for route, fit in self.fits.items()]
        for key, ratio in self.ratios.items():
            lines.append(f"{key}: {'n/a' if ratio is None else f'{ratio:.4f}'}")
        return lines
