"""
Experiment sweeps: accuracy of the difference formula, convergence of the full scheme against the
manufactured solution, maximum-norm and energy histories, and error surfaces.

Independent (gamma, tau, h) cells run in a thread pool; every cell is itself a sequential computation
and reports are assembled in input order so their contents do not depend on scheduling.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from constants import ENERGY_SLACK, FORMULA_ERROR_WINDOW, MAX_NORM_SLACK, RANDOM_INITIAL_SEED, SWEEP_THREADS
from exact_oracle import (
    POLY4,
    POLY6,
    example_initials,
    manufactured_solution,
    manufactured_source_field,
    riesz_derivative_poly,
)
from riesz_op import GridSpec, RieszOperator, StateField, apply_riesz_formula, energy_stability_tau_bound
from stepper import SolverConfig, run


def observed_order(e_prev: float, e_cur: float, r_prev: float, r_cur: float) -> float:
    return math.log(e_prev / e_cur) / math.log(r_prev / r_cur)


def run_cells(task, keys: list, threads: Optional[int] = None) -> tuple[dict, dict]:
    """
    Run task(key) for every key in a thread pool.

    Returns the results and the wall time of each cell, both keyed like the input.
    """
    # Have at least one worker and at most `threads` workers
    n_workers = min(threads or SWEEP_THREADS, max(len(keys), 1))
    results, timing = {}, {}

    def timed(key):
        start = time.perf_counter()
        value = task(key)
        return value, time.perf_counter() - start

    with ThreadPoolExecutor(n_workers) as executor:
        futures = {executor.submit(timed, key): key for key in keys}
        for future in as_completed(futures):
            key = futures[future]
            results[key], timing[key] = future.result()
            logging.info(f"Finished cell {key} in {timing[key]:.3f}s")
    return results, timing


@dataclass
class ConvergenceRow:
    gamma: float
    tau: Optional[float]
    h: float
    max_abs_error: float
    temporal_order: Optional[float] = None
    spatial_order: Optional[float] = None
    # Formula sweeps only: the maximum over every interior node, boundary layer included
    full_grid_error: Optional[float] = None


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    csv_header = ("gamma", "tau", "h", "max_abs_error", "temporal_order", "spatial_order")

    def csv_rows(self):
        for row in self.rows:
            yield (row.gamma, row.tau, row.h, row.max_abs_error, row.temporal_order, row.spatial_order)

    def cell(self, gamma: float, h: float) -> ConvergenceRow:
        for row in self.rows:
            if math.isclose(row.gamma, gamma) and math.isclose(row.h, h):
                return row
        raise KeyError(f"no row for gamma={gamma}, h={h}")

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "rows": [
                {**dict(zip(self.csv_header, values)), "full_grid_error": row.full_grid_error}
                for values, row in zip(self.csv_rows(), self.rows)
            ],
            "timing": self.timing,
        }


def _formula_cell(gamma: float, hs: list, window: tuple) -> list[ConvergenceRow]:
    rows = []
    for h in hs:
        grid = GridSpec.from_h(h)
        x = grid.closed_nodes()
        interior = x[1:-1]
        approx = apply_riesz_formula(gamma, grid.h, POLY4(x))
        errors = np.abs(approx - riesz_derivative_poly(POLY4, gamma, interior))
        inside = (interior >= window[0] - 1e-12) & (interior <= window[1] + 1e-12)
        error = float(np.max(errors[inside]))
        order = observed_order(rows[-1].max_abs_error, error, rows[-1].h, grid.h) if rows else None
        rows.append(
            ConvergenceRow(gamma, None, grid.h, error, spatial_order=order, full_grid_error=float(np.max(errors)))
        )
    return rows


def convergence_space_formula(
    gammas, hs, threads: Optional[int] = None, window: tuple = FORMULA_ERROR_WINDOW
) -> ConvergenceReport:
    """
    Maximum error of the difference formula against the exact Riesz derivative of x^4 (1-x)^4 on [0, 1],
    taken over the interior nodes inside `window`. The maximum over all nodes is kept as full_grid_error.

    Orders are log(e_prev/e_cur) / log(h_prev/h_cur) between consecutive h of the same gamma.
    """
    hs = [float(h) for h in hs]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("hs must be strictly decreasing")
    gammas = [float(g) for g in gammas]
    results, timing = run_cells(lambda g: _formula_cell(g, hs, window), gammas, threads)
    report = ConvergenceReport(
        metadata={"test_function": "x^4 (1-x)^4", "oracle": "riesz_derivative_poly", "window": list(window)}
    )
    for gamma in gammas:
        report.rows.extend(results[gamma])
        report.timing[f"gamma={gamma}"] = timing[gamma]
    return report


def _forced_run(gamma: float, tau: float, h: float, epsilon: float, T: float, monitors=("max_norm",), stride=1):
    grid = GridSpec.from_h(h)
    config = SolverConfig(gamma, epsilon, tau, T, grid, monitors=monitors, snapshot_stride=stride)
    initial = StateField(grid, POLY6(grid.nodes()))
    return grid, run(config, initial, manufactured_source_field(grid, gamma, epsilon))


def _full_cell(gamma: float, ladder: list, epsilon: float, T: float) -> list[ConvergenceRow]:
    rows = []
    for tau, h in ladder:
        grid, record = _forced_run(gamma, tau, h, epsilon, T)
        error = float(np.max(np.abs(record.final.values - manufactured_solution(grid.nodes(), T))))
        temporal = spatial = None
        if rows:
            prev = rows[-1]
            temporal = observed_order(prev.max_abs_error, error, prev.tau, tau)
            spatial = observed_order(prev.max_abs_error, error, prev.h, grid.h)
        rows.append(ConvergenceRow(gamma, tau, grid.h, error, temporal, spatial))
    return rows


def convergence_full(gammas, ladder, epsilon: float, T: float = 1.0, threads: Optional[int] = None):
    """
    Maximum error at t=T of the forced scheme against u = exp(-t) x^6 (1-x)^6.

    The temporal order is measured against the tau ratio and the spatial order against the h ratio
    of the same pair of rows.
    """
    ladder = [(float(tau), float(h)) for tau, h in ladder]
    gammas = [float(g) for g in gammas]
    results, timing = run_cells(lambda g: _full_cell(g, ladder, epsilon, T), gammas, threads)
    report = ConvergenceReport(
        metadata={"epsilon": epsilon, "T": T, "exact_solution": "exp(-t) x^6 (1-x)^6", "oracle": "manufactured"}
    )
    for gamma in gammas:
        report.rows.extend(results[gamma])
        report.timing[f"gamma={gamma}"] = timing[gamma]
    return report


@dataclass
class MaxNormSeries:
    gamma: float
    tau: float
    times: list
    max_norms: list
    warnings: list

    @property
    def exceeded(self) -> bool:
        return max(self.max_norms) > 1.0 + MAX_NORM_SLACK


@dataclass
class MaxPrincipleReport:
    series: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    csv_header = ("gamma", "tau", "k", "t", "max_norm")

    @property
    def global_max(self) -> float:
        return max(max(s.max_norms) for s in self.series) if self.series else 0.0

    @property
    def excursions(self) -> list:
        return [(s.gamma, s.tau) for s in self.series if s.exceeded]

    def csv_rows(self):
        for s in self.series:
            for k, (t, value) in enumerate(zip(s.times, s.max_norms)):
                yield (s.gamma, s.tau, k, t, value)

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "global_max": self.global_max,
            "excursions": [list(e) for e in self.excursions],
            "series": [
                {"gamma": s.gamma, "tau": s.tau, "max_norms": s.max_norms, "warnings": s.warnings}
                for s in self.series
            ],
            "timing": self.timing,
        }


def _max_norm_cell(gamma, tau, h, epsilon, T, initial, seed) -> MaxNormSeries:
    grid = GridSpec.from_h(h)
    config = SolverConfig(gamma, epsilon, tau, T, grid, monitors=("max_norm",))
    record = run(config, example_initials(initial, grid, gamma, seed=seed))
    return MaxNormSeries(gamma, tau, record.times, record.max_norms, record.warnings)


def max_principle_experiment(
    gammas,
    taus,
    h: float,
    epsilon: float,
    T: float,
    threads: Optional[int] = None,
    initial: str = "maxprinciple",
    seed: int = RANDOM_INITIAL_SEED,
):
    """
    Max-norm histories for every (gamma, tau).

    The default initial is u0 = x^(3.5+gamma) (1-x)^(3.5+gamma) sin(pi x). With initial="random" every cell
    starts from the same seeded U(-1, 1) draw.
    """
    keys = [(float(g), float(t)) for g in gammas for t in taus]
    results, timing = run_cells(lambda key: _max_norm_cell(*key, h, epsilon, T, initial, seed), keys, threads)
    metadata = {"h": h, "epsilon": epsilon, "T": T, "slack": MAX_NORM_SLACK, "initial": initial}
    if initial == "random":
        metadata["seed"] = seed
    report = MaxPrincipleReport(metadata=metadata)
    for key in keys:
        report.series.append(results[key])
        report.timing[f"gamma={key[0]},tau={key[1]}"] = timing[key]
    if report.excursions:
        logging.warning(f"Max norm exceeded 1 for {report.excursions}")
    return report


@dataclass
class EnergyReport:
    gamma: float
    tau: float
    h: float
    epsilon: float
    T: float
    bound: float
    times: list
    energies: list
    warnings: list = field(default_factory=list)

    csv_header = ("k", "t", "energy")

    @property
    def max_increase(self) -> float:
        return float(np.max(np.diff(self.energies))) if len(self.energies) > 1 else 0.0

    @property
    def monotone(self) -> bool:
        return self.max_increase <= ENERGY_SLACK

    def csv_rows(self):
        for k, (t, e) in enumerate(zip(self.times, self.energies)):
            yield (k, t, e)

    def to_dict(self) -> dict:
        return {
            "metadata": {
                "gamma": self.gamma,
                "tau": self.tau,
                "h": self.h,
                "epsilon": self.epsilon,
                "T": self.T,
                "energy_tau_bound": self.bound,
                "monotone": self.monotone,
                "max_increase": self.max_increase,
            },
            "energies": self.energies,
            "warnings": self.warnings,
        }


def tau_for_bound_fraction(gamma: float, h: float, epsilon: float, fraction: float, T: float) -> float:
    """Largest tau = T/N with N whole and tau <= fraction * (energy-stability step bound)."""
    op = RieszOperator.build(GridSpec.from_h(h), gamma, epsilon)
    target = fraction * energy_stability_tau_bound(op)
    return T / math.ceil(T / target)


def energy_experiment(gamma: float, tau: float, h: float, epsilon: float, T: float) -> EnergyReport:
    """Discrete-energy history of the unforced run from the maximum-principle initial condition."""
    grid = GridSpec.from_h(h)
    op = RieszOperator.build(grid, gamma, epsilon)
    config = SolverConfig(gamma, epsilon, tau, T, grid, monitors=("max_norm", "energy"))
    record = run(config, example_initials("maxprinciple", grid, gamma))
    report = EnergyReport(
        gamma, tau, grid.h, epsilon, T, energy_stability_tau_bound(op), record.times, record.energies, record.warnings
    )
    if not report.monotone:
        logging.warning(f"Energy increased by up to {report.max_increase:.3e} for gamma={gamma}, tau={tau}")
    return report


@dataclass
class ErrorSurfaceReport:
    gamma: float
    tau: float
    h: float
    epsilon: float
    rows: list = field(default_factory=list)

    csv_header = ("t", "x", "abs_error")

    def csv_rows(self):
        yield from self.rows

    @property
    def max_error(self) -> float:
        return max((row[2] for row in self.rows), default=0.0)

    def to_dict(self) -> dict:
        return {
            "metadata": {"gamma": self.gamma, "tau": self.tau, "h": self.h, "epsilon": self.epsilon},
            "max_error": self.max_error,
            "n_rows": len(self.rows),
        }


def error_surface_experiment(gamma: float, tau: float, h: float, epsilon: float, T: float, stride: int):
    """Pointwise |U - u| of the forced problem at every `stride`-th step, plot-ready as (t, x, error) rows."""
    grid, record = _forced_run(gamma, tau, h, epsilon, T, monitors=("max_norm", "snapshots"), stride=stride)
    x = grid.nodes()
    report = ErrorSurfaceReport(gamma, tau, grid.h, epsilon)
    for t, state in record.snapshots:
        error = np.abs(state.values - manufactured_solution(x, t))
        report.rows.extend((t, xj, ej) for xj, ej in zip(x, error))
    return report
