"""
Two-body command jobs: resonance couplings and per-momentum bound states.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Optional

import numpy as np
import polars as pl
from tqdm import tqdm

from efimov_kit.errors import InvariantError
from efimov_kit.job import BaseJob
from efimov_kit.model.core import pair_band_edges
from efimov_kit.quadrature.torus import integrate_inverse_epsilon
from efimov_kit.report import write_csv, write_json
from efimov_kit.two_body.determinant import (
    bound_state,
    evaluator_for,
    expansion_slope,
    lattice_constant,
    mu_resonance,
    resonance_flags,
    resonant_config,
)

LATTICE_METHODS = ("laplace", "shifted", "subtraction")


class ResonanceJob(BaseJob):
    """
    Lattice constant W by every quadrature method, the resonance couplings
    mu_alpha^0, and the checks Delta_alpha(0, 0) = 0 and the expansion slope
    at resonance.

    Outputs ``resonance.json`` and ``resonance.csv``.
    """

    TITLE = "Resonance"

    def execute(self) -> None:
        q = self.config.quadrature
        lattice = {}
        for method in tqdm(LATTICE_METHODS, desc="Lattice constant", unit="method", disable=not self.verbose):
            if method == "laplace":
                lattice[method] = lattice_constant(method)
            else:
                lattice[method] = integrate_inverse_epsilon(
                    q.resolutions, method=method, tol=q.lattice_tol
                )
            self.logger.debug(f"W ({method}) = {lattice[method]:.12f}")
        spread = max(lattice.values()) - min(lattice.values())
        if spread > q.lattice_tol:
            self.logger.warning(f"Lattice constant methods disagree by {spread:.3g}")

        resonant = resonant_config(
            self.config.masses, strict_hypothesis=self.config.strict_hypothesis
        )
        rows = []
        for alpha in (1, 2, 3):
            origin = evaluator_for(alpha, resonant).delta(np.zeros(3), 0.0, cache=False)
            slope = expansion_slope(alpha, resonant)
            rows.append(
                {
                    "alpha": alpha,
                    "pair_mass": resonant.pair_sum(alpha),
                    "mu0": mu_resonance(alpha, resonant),
                    "mu": self.system.mu_of(alpha),
                    "delta_origin": float(origin),
                    "slope_analytic": slope.analytic,
                    "slope_estimate": slope.estimate,
                    "slope_error": slope.relative_error,
                }
            )
            self.logger.info(
                f"✓ alpha={alpha}: mu0={rows[-1]['mu0']:.10f}, "
                f"Delta(0,0)={origin:.3e}, slope error {slope.relative_error:.2%}"
            )

        self.rows = rows
        self.lattice = lattice
        summary = {
            "config_hash": self.config_hash,
            "lattice_constant": lattice,
            "lattice_spread": spread,
            "resonance_flags": list(resonance_flags(self.system)),
            "channels": rows,
        }
        self._record(write_json(summary, self.output_dir / "resonance.json"))
        self._record(write_csv(pl.DataFrame(rows), self.output_dir / "resonance.csv", self.comment))

    def _summary_lines(self):
        lines = [f"W ({m}):{' ' * (13 - len(m))}{v:.10f}" for m, v in self.lattice.items()]
        lines += [f"mu{r['alpha']}^0:          {r['mu0']:.10f}" for r in self.rows]
        return lines


class TwoBodyJob(BaseJob):
    """
    Band edges, bound states and the determinant signs of every channel at
    the configured momenta k.

    At resonance coupling and k != 0 the pattern Delta(k, 0) > 0 > Delta(k, E_min)
    is enforced. Outputs ``two_body.csv``.
    """

    TITLE = "Two-Body"

    COLUMNS = ["alpha", "k1", "k2", "k3", "E_min", "E_max", "z", "delta_zero", "delta_edge"]

    def execute(self) -> None:
        points = [np.asarray(k, dtype=float) for k in self.config.ladders.k_points]
        tasks = [(alpha, k) for k in points for alpha in (1, 2, 3)]
        flags = resonance_flags(self.system)
        slots: List[Optional[Dict[str, object]]] = [None] * len(tasks)

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {
                executor.submit(self._row, alpha, k): i
                for i, (alpha, k) in enumerate(tasks)
            }
            with tqdm(total=len(tasks), desc="Two-body rows", unit="row", disable=not self.verbose) as pbar:
                for future in as_completed(futures):
                    slots[futures[future]] = future.result()
                    pbar.update(1)

        violations = [
            row for row in slots
            if flags[row["alpha"] - 1] and not _at_origin(row) and not _sign_pattern(row)
        ]
        self.rows = slots
        self._record(
            write_csv(pl.DataFrame(slots, schema=self._schema()), self.output_dir / "two_body.csv", self.comment)
        )
        if violations:
            first = violations[0]
            raise InvariantError(
                f"Sign pattern Delta(k,0) > 0 > Delta(k,E_min) fails for alpha={first['alpha']} "
                f"at k=({first['k1']}, {first['k2']}, {first['k3']}) and {len(violations) - 1} more"
            )

    def _row(self, alpha: int, k: np.ndarray) -> Dict[str, object]:
        evaluator = evaluator_for(alpha, self.system)
        e_min, e_max = (float(v) for v in pair_band_edges(alpha, k, self.system))
        z = bound_state(alpha, k, self.system, tol=self.config.quadrature.root_tol, evaluator=evaluator)
        return {
            "alpha": alpha,
            "k1": float(k[0]),
            "k2": float(k[1]),
            "k3": float(k[2]),
            "E_min": e_min,
            "E_max": e_max,
            "z": z,
            "delta_zero": float(evaluator.delta(k, 0.0)),
            "delta_edge": float(evaluator.delta(k, e_min)),
        }

    def _schema(self) -> Dict[str, pl.DataType]:
        return {c: (pl.Int64 if c == "alpha" else pl.Float64) for c in self.COLUMNS}

    def _summary_lines(self):
        found = sum(1 for r in self.rows if r["z"] is not None)
        return [f"Rows:            {len(self.rows)}", f"Bound states:    {found}"]


def _at_origin(row: Dict[str, object]) -> bool:
    return all(abs(row[c]) < 1e-14 for c in ("k1", "k2", "k3"))


def _sign_pattern(row: Dict[str, object]) -> bool:
    return row["delta_zero"] > 0.0 > row["delta_edge"]
