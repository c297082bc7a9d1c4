"""
Fully discrete Allen-Cahn scheme: Pade [1,1] integration factor in time with trapezoidal quadrature,

    U^{k+1} = B U^k + tau/2 f(U^{k+1}) + tau/2 B f(U^k),    B = (I + tau/2 A)^-1 (I - tau/2 A),

with f(u) = u - u^3. The implicit part is diagonal, so each step is one B application followed by an
independent scalar cubic solve per node.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from constants import (
    CG_ITER_FACTOR,
    CHOLESKY_LIMIT,
    CUBIC_MAX_ITER,
    CUBIC_TOL,
    LINEAR_TOL,
    MAX_NORM_SLACK,
)
from fraccoeff import check_gamma
from riesz_op import GridMismatchError, GridSpec, RieszOperator, StateField, dense_A, energy_stability_tau_bound

MONITORS = ("max_norm", "energy", "snapshots")
MODES = ("dense_cholesky", "matrix_free_cg")

Source = Callable[[float], np.ndarray]


class SolverError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    gamma: float
    epsilon: float
    tau: float
    T: float
    grid: GridSpec
    linear_tol: float = LINEAR_TOL
    cubic_tol: float = CUBIC_TOL
    monitors: tuple = ("max_norm", "energy")
    snapshot_stride: int = 1

    def __post_init__(self):
        try:
            check_gamma(self.gamma, allow_subunit=False)
        except ValueError as ex:
            raise ConfigError(f"gamma: {ex}") from ex
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon={self.epsilon} must be > 0")
        if not self.tau > 0:
            raise ConfigError(f"tau={self.tau} must be > 0")
        if not self.tau <= 2:
            raise ConfigError(f"tau={self.tau} must be <= 2 for the nodewise cubic to stay monotone")
        if not self.T > 0:
            raise ConfigError(f"T={self.T} must be > 0")
        ratio = self.T / self.tau
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ConfigError(f"T/tau={ratio} is not an integer number of steps")
        if not (self.linear_tol > 0 and self.cubic_tol > 0):
            raise ConfigError("tolerances must be > 0")
        unknown = set(self.monitors) - set(MONITORS)
        if unknown:
            raise ConfigError(f"unknown monitors {sorted(unknown)}, expected a subset of {MONITORS}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ConfigError(f"snapshot_stride={self.snapshot_stride} must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))


@dataclass
class StepReport:
    k: int
    linear_iterations: int
    linear_residual: float


@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    max_norms: list = field(default_factory=list)
    energies: Optional[list] = None
    snapshots: Optional[list] = None
    step_reports: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    final: Optional[StateField] = None

    csv_header = ("k", "t", "max_norm", "energy")

    def csv_rows(self):
        for k, t in enumerate(self.times):
            energy = self.energies[k] if self.energies is not None else float("nan")
            yield (k, t, self.max_norms[k], energy)

    def to_dict(self) -> dict:
        return {
            "times": list(self.times),
            "max_norms": list(self.max_norms),
            "energies": None if self.energies is None else list(self.energies),
            "warnings": list(self.warnings),
            "linear_iterations": [r.linear_iterations for r in self.step_reports],
        }


class LinearSolveContext:
    """
    Everything needed to apply B for a fixed (operator, tau).

    (I + tau/2 A) is symmetric positive definite, so 1D problems up to CHOLESKY_LIMIT unknowns use a cached
    Cholesky factor and everything else uses unpreconditioned CG with the FFT matvec.
    """

    def __init__(self, operator: RieszOperator, tau: float, linear_tol: float = LINEAR_TOL, mode: str = None):
        if tau < 0:
            raise ValueError(f"tau={tau} must be non-negative")
        if mode is None:
            mode = "dense_cholesky" if operator.grid.d == 1 and operator.grid.n <= CHOLESKY_LIMIT else "matrix_free_cg"
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode}, expected one of {MODES}")
        if mode == "dense_cholesky" and operator.grid.d != 1:
            raise ValueError("dense_cholesky is only available for d = 1")
        self.operator = operator
        self.tau = float(tau)
        self.linear_tol = linear_tol
        self.mode = mode
        self.max_iterations = CG_ITER_FACTOR * operator.grid.size

        half = 0.5 * self.tau
        if mode == "dense_cholesky":
            self._dense = dense_A(operator)
            eye = np.eye(operator.grid.n)
            self._factor = scipy.linalg.cho_factor(eye + half * self._dense)
        else:
            size = operator.grid.size
            self._lhs = scipy.sparse.linalg.LinearOperator(
                (size, size), matvec=lambda x: x + half * operator.matvec(x, "fft"), dtype=float
            )
        logging.debug(f"Linear solve context mode={mode}, tau={tau}, unknowns={operator.grid.size}")

    def minus(self, values: np.ndarray) -> np.ndarray:
        """(I - tau/2 A) v."""
        if self.mode == "dense_cholesky":
            return values - 0.5 * self.tau * (self._dense @ values)
        return values - 0.5 * self.tau * self.operator.matvec(values, "fft")

    def solve_plus(self, rhs: np.ndarray) -> tuple[np.ndarray, int, float]:
        """Solve (I + tau/2 A) y = rhs; returns y, iteration count and relative residual."""
        if self.tau == 0.0:
            return rhs.copy(), 0, 0.0
        if self.mode == "dense_cholesky":
            return scipy.linalg.cho_solve(self._factor, rhs), 0, 0.0

        iterations = 0

        def count(_):
            nonlocal iterations
            iterations += 1

        y, info = scipy.sparse.linalg.cg(
            self._lhs, rhs, rtol=self.linear_tol, atol=0.0, maxiter=self.max_iterations, callback=count
        )
        norm = np.linalg.norm(rhs)
        residual = float(np.linalg.norm(rhs - self._lhs.matvec(y)) / norm) if norm > 0 else 0.0
        if info != 0:
            raise SolverError(
                f"CG did not reach relative residual {self.linear_tol} in {self.max_iterations} iterations "
                f"(info={info}, residual={residual:.3e})"
            )
        return y, iterations, residual


def _apply_B_values(ctx: LinearSolveContext, values: np.ndarray) -> tuple[np.ndarray, int, float]:
    return ctx.solve_plus(ctx.minus(values))


def apply_B(ctx: LinearSolveContext, v: StateField) -> StateField:
    if v.grid != ctx.operator.grid:
        raise GridMismatchError("field grid does not match the solve context")
    y, _, _ = _apply_B_values(ctx, v.values)
    return StateField(v.grid, y)


def pointwise_cubic_solve(r, tau: float, tol: float = CUBIC_TOL, max_iter: int = CUBIC_MAX_ITER):
    """
    Unique real root u of (1 - tau/2) u + (tau/2) u^3 = r, elementwise.

    Safeguarded Newton on |r| with the bracket [0, max(1, |r|)], falling back to bisection whenever
    the Newton iterate leaves the bracket; the sign of r is restored at the end, so the map is exactly odd.
    A node stops once |residual| <= tol, or once its bracket or its Newton update is at rounding level (large |r|).

    Raises:
        ValueError: if tau is outside (0, 2].
        SolverError: if some root is neither converged nor bracketed to rounding level.
    """
    if not 0.0 < tau <= 2.0:
        raise ValueError(f"tau={tau} must lie in (0, 2] for a monotone cubic")
    r_arr = np.asarray(r, dtype=float)
    mag = np.abs(r_arr)
    a, b = 1.0 - 0.5 * tau, 0.5 * tau
    lo = np.zeros_like(mag)
    hi = np.maximum(1.0, mag)
    u = mag.copy()
    ulp = 4 * np.finfo(float).eps
    stalled = np.zeros(mag.shape, dtype=bool)

    for _ in range(max_iter):
        residual = a * u + b * u**3 - mag
        lo = np.where(residual < 0, u, lo)
        hi = np.where(residual > 0, u, hi)
        done = (np.abs(residual) <= tol) | (hi - lo <= ulp * np.maximum(1.0, hi)) | stalled
        if np.all(done):
            break
        slope = a + 3.0 * b * u * u
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = u - residual / slope
        inside = (newton > lo) & (newton < hi) & np.isfinite(newton)
        proposal = np.where(inside, newton, 0.5 * (lo + hi))
        stalled = np.abs(proposal - u) <= ulp * np.maximum(1.0, u)
        u = np.where(done, u, proposal)
    else:
        residual = a * u + b * u**3 - mag
        stuck = (np.abs(residual) > tol) & (hi - lo > ulp * np.maximum(1.0, hi)) & ~stalled
        if np.any(stuck):
            raise SolverError(f"cubic solve failed to converge for {int(np.sum(stuck))} nodes")

    root = np.copysign(u, r_arr)
    return float(root) if root.ndim == 0 else root


def nonlinearity(u: np.ndarray) -> np.ndarray:
    """f(u) = -F'(u) = u - u^3 for the double well F(u) = (u^2 - 1)^2 / 4."""
    return u - u**3


def _step_values(ctx, values, source_now=None, source_next=None, cubic_tol=CUBIC_TOL):
    half = 0.5 * ctx.tau
    combined = values + half * nonlinearity(values)
    if source_now is not None:
        combined = combined + half * source_now
    r, iterations, residual = _apply_B_values(ctx, combined)
    if source_next is not None:
        r = r + half * source_next
    return pointwise_cubic_solve(r, ctx.tau, tol=cubic_tol), iterations, residual


def step(
    ctx: LinearSolveContext,
    U_k: StateField,
    source_now: Optional[np.ndarray] = None,
    source_next: Optional[np.ndarray] = None,
) -> StateField:
    """
    Advance one step: r = B (U^k + tau/2 f(U^k)), plus the trapezoidal source part
    tau/2 (B s(t_k) + s(t_{k+1})) for forced problems, then solve u - tau/2 f(u) = r node by node.
    """
    if U_k.grid != ctx.operator.grid:
        raise GridMismatchError("field grid does not match the solve context")
    if (source_now is None) != (source_next is None):
        raise ValueError("source_now and source_next must be given together")
    values, _, _ = _step_values(ctx, U_k.values, source_now, source_next)
    return StateField(U_k.grid, values)


def discrete_energy(op: RieszOperator, U: StateField) -> float:
    """
    E_h(U) = <F(U), 1> + (h/2) U^T A U with F(u) = (u^2 - 1)^2 / 4.

    For d > 1 both terms carry the h^d cell weight (derived extension of the 1D definition).
    """
    if U.grid != op.grid:
        raise GridMismatchError("field grid does not match the operator")
    u = U.values
    weight = op.grid.cell_volume
    potential = 0.25 * (u**2 - 1.0) ** 2
    return float(weight * np.sum(potential) + 0.5 * weight * np.dot(u, op.matvec(u, "fft")))


def theory_warnings(op: RieszOperator, tau: float, initial: StateField, forced: bool) -> list[str]:
    """Named step-size and data hypotheses of the stability results that a run violates."""
    warnings = []
    if tau > 1.0:
        warnings.append(f"max-principle step condition (0 < tau <= 1) violated: tau={tau}")
    bound = energy_stability_tau_bound(op)
    if tau > bound:
        warnings.append(f"energy-stability step bound (tau <= {bound:.6e}) violated: tau={tau}")
    if not forced and initial.max_norm() > 1.0:
        warnings.append(f"max-principle data condition (||u0||_inf <= 1) violated: {initial.max_norm():.6e}")
    return warnings


def run(config: SolverConfig, initial: StateField, source: Optional[Source] = None) -> TrajectoryRecord:
    """
    Iterate the scheme for N = T / tau steps, recording the enabled monitors after every step.

    Runs outside the step-size hypotheses of the stability results are legitimate experiments,
    so they produce warnings rather than errors.
    """
    if initial.grid != config.grid:
        raise GridMismatchError("initial field grid does not match the configuration")
    op = RieszOperator.build(config.grid, config.gamma, config.epsilon)
    ctx = LinearSolveContext(op, config.tau, config.linear_tol)
    record = TrajectoryRecord()
    record.warnings = theory_warnings(op, config.tau, initial, forced=source is not None)
    for message in record.warnings:
        logging.warning(message)

    track_energy = "energy" in config.monitors
    track_snapshots = "snapshots" in config.monitors
    if track_energy:
        record.energies = []
    if track_snapshots:
        record.snapshots = []

    def observe(k: int, t: float, state: StateField):
        record.times.append(t)
        record.max_norms.append(state.max_norm())
        if track_energy:
            record.energies.append(discrete_energy(op, state))
        if track_snapshots and k % config.snapshot_stride == 0:
            record.snapshots.append((t, state))

    state = initial
    observe(0, 0.0, state)
    source_now = source(0.0) if source is not None else None
    for k in range(config.n_steps):
        t_next = (k + 1) * config.tau
        source_next = source(t_next) if source is not None else None
        values, iterations, residual = _step_values(ctx, state.values, source_now, source_next, config.cubic_tol)
        state = StateField(config.grid, values)
        record.step_reports.append(StepReport(k + 1, iterations, residual))
        observe(k + 1, t_next, state)
        source_now = source_next

    record.final = state
    if source is None and initial.max_norm() <= 1.0 and max(record.max_norms) > 1.0 + MAX_NORM_SLACK:
        logging.warning(f"max norm reached {max(record.max_norms):.16e} > 1")
    logging.info(
        f"Finished {config.n_steps} steps: gamma={config.gamma}, tau={config.tau}, M={config.grid.M}, "
        f"final max norm={state.max_norm():.6e}"
    )
    return record
