"""
Three-body command jobs: essential spectrum per fibre and eigenvalue counts.
"""

from typing import Dict, List

import numpy as np
import polars as pl
from tqdm import tqdm

from efimov_kit.job import BaseJob
from efimov_kit.model.core import three_body_band
from efimov_kit.report import write_csv
from efimov_kit.three_body.channels import essential_spectrum
from efimov_kit.three_body.faddeev import FaddeevSolver, finiteness_probe, lower_bound_gap


class BandsJob(BaseJob):
    """
    Channel intervals, the three-body band, their union and tau_ess(K) at
    every configured K. Outputs ``bands.csv``.
    """

    TITLE = "Bands"

    def execute(self) -> None:
        branches = self.branches()
        rows: List[Dict[str, object]] = []
        self.tau = {}
        for K in tqdm(self.config.ladders.K_points, desc="Fibres", unit="K", disable=not self.verbose):
            bands = essential_spectrum(K, self.system, branches, scan=self.config.quadrature.scan)
            rows.extend(bands.rows())
            for lo, hi in bands.merged:
                rows.append(
                    {
                        "K1": float(bands.K[0]),
                        "K2": float(bands.K[1]),
                        "K3": float(bands.K[2]),
                        "source": "merged",
                        "lower": lo,
                        "upper": hi,
                        "tau_ess": bands.tau_ess,
                    }
                )
            e_min, _ = three_body_band(K, self.system)
            self.tau[tuple(K)] = bands.tau_ess
            if np.any(bands.K != 0.0) and not bands.tau_ess < e_min:
                self.logger.info(f"tau_ess(K) = E_min(K) = {e_min:.10g} at K={list(K)}")
            if self.verbose:
                tqdm.write(f"✓ K={list(K)}: tau_ess={bands.tau_ess:.10g}, {len(bands.merged)} interval(s)")

        self._record(write_csv(pl.DataFrame(rows), self.output_dir / "bands.csv", self.comment))

    def _summary_lines(self):
        return [f"tau_ess{list(K)}: {tau:.10g}" for K, tau in self.tau.items()]


class CountJob(BaseJob):
    """
    N(K, z) from the Faddeev inertia on the K x z ladder, the finiteness
    probe just below tau_ess(K) and the lower bound of the ground state.

    Outputs ``counts.csv``, ``finiteness.csv`` and ``bounds.csv``.
    """

    TITLE = "Count"

    def execute(self) -> None:
        branches = self.branches()
        ladders = self.config.ladders
        spec = self.config.grid
        grid_hash = spec.digest()
        counts, finiteness, bounds = [], [], []
        self.stabilized = {}

        for K in ladders.K_points:
            solver = FaddeevSolver(
                K,
                self.system,
                branches,
                spec,
                max_workers=self.max_workers,
                seed=self.config.seed,
                scan=self.config.quadrature.scan,
            )
            for z in tqdm(ladders.z, desc=f"N(K={list(K)}, z)", unit="z", disable=not self.verbose):
                n = solver.count(z)
                counts.append(
                    {"K1": K[0], "K2": K[1], "K3": K[2], "z": z, "N": n, "grid_hash": grid_hash}
                )
                if self.verbose:
                    tqdm.write(f"  z={z:.3e}: N={n}")

            report = finiteness_probe(
                K,
                self.system,
                branches,
                spec,
                deltas=ladders.deltas,
                scan=self.config.quadrature.scan,
                max_workers=self.max_workers,
                verbose=self.verbose,
            )
            finiteness.extend(
                dict(row, hs_norm=report.hs_norm, hs_norm_refined=report.refined_hs_norm)
                for row in report.rows()
            )
            self.stabilized[tuple(K)] = report.stabilized

            bound, tau_s = lower_bound_gap(K, self.system, branches, spec, solver=solver)
            bounds.append(
                {"K1": K[0], "K2": K[1], "K3": K[2], "lower_bound": bound, "tau_s": tau_s, "holds": bound <= tau_s}
            )
            if bound > tau_s:
                self.logger.warning(f"Lower bound {bound:.10g} exceeds tau_s={tau_s:.10g} at K={list(K)}")

        self._record(write_csv(pl.DataFrame(counts), self.output_dir / "counts.csv", self.comment))
        self._record(write_csv(pl.DataFrame(finiteness), self.output_dir / "finiteness.csv", self.comment))
        self._record(write_csv(pl.DataFrame(bounds), self.output_dir / "bounds.csv", self.comment))

    def _summary_lines(self):
        return [
            f"Stabilized{list(K)}: {'yes' if ok else 'no'}" for K, ok in self.stabilized.items()
        ]
