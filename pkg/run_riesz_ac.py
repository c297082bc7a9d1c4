import json
import logging
import os
from dataclasses import dataclass, field, replace

import click
import numpy as np

import harness
import utils
from constants import (
    COEFF_FLOAT_FORMAT,
    CUBIC_TOL,
    ENERGY_BOUND_FRACTION,
    ERROR_SURFACE_EPSILON,
    ERROR_SURFACE_GAMMA,
    ERROR_SURFACE_H,
    ERROR_SURFACE_STRIDE,
    ERROR_SURFACE_TAU,
    FORMULA_GRID_SIZES,
    LINEAR_TOL,
    LOG_FORMAT,
    MAXPRINCIPLE_EPSILON,
    MAXPRINCIPLE_GAMMAS,
    MAXPRINCIPLE_H,
    MAXPRINCIPLE_T,
    MAXPRINCIPLE_TAUS,
    RANDOM_INITIAL_SEED,
    SWEEP_THREADS,
    TABLE1_GAMMAS,
    TABLE2_GAMMAS,
    TABLE3_EPSILON,
    TABLE3_GAMMAS,
    TABLE3_LADDER,
    TABLE3_T,
    THREADS_ENV_VAR,
)
from exact_oracle import INITIALS, POLY4, example_initials, manufactured_source_field, riesz_derivative_poly
from fraccoeff import check_gamma, coefficient_table
from riesz_op import PATHS, GridSpec, RieszOperator, apply_riesz_formula
from stepper import ConfigError, SolverConfig, SolverError, run, theory_warnings

EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4

REQUIRED_KEYS = ("gamma", "epsilon", "tau", "T", "M")
OPTIONAL_DEFAULTS = {
    "dimension": 1,
    "domain": [0.0, 1.0],
    "linear_tol": LINEAR_TOL,
    "cubic_tol": CUBIC_TOL,
    "monitors": ["max_norm", "energy"],
    "snapshot_stride": 1,
    "initial": "maxprinciple",
    "source": "none",
    "seed": RANDOM_INITIAL_SEED,
}
SOURCES = ("none", "manufactured")


@dataclass
class RunManifest:
    """What a `run` was asked to do after defaults were filled in, and which stability hypotheses it breaks."""

    resolved: dict
    warnings: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.resolved, "warnings": self.warnings, "outputs": self.outputs}


def _number(key: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"'{key}' must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _load(source) -> dict:
    if isinstance(source, dict):
        return dict(source)
    with open(source, encoding="utf-8") as file:
        text = file.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as ex:
        raise ConfigError(f"{source}, line {ex.lineno}, column {ex.colno}: {ex.msg}") from ex
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: the config must be a JSON object of key/value pairs")
    return data


def parse_config(source) -> tuple[SolverConfig, RunManifest]:
    """
    Parse and validate a run configuration.

    Args:
        source: path of a JSON config file, or an already decoded dict.

    Returns:
        The validated SolverConfig and a RunManifest with every default resolved and the
        stability-hypothesis warnings of the run.

    Raises:
        ConfigError: on malformed JSON, unknown or missing keys, and values outside their domain.
        OSError: if the file cannot be read.
    """
    data = _load(source)
    unknown = sorted(set(data) - set(REQUIRED_KEYS) - set(OPTIONAL_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown keys {unknown}; allowed keys are {list(REQUIRED_KEYS) + list(OPTIONAL_DEFAULTS)}")
    missing = [key for key in REQUIRED_KEYS if key not in data]
    if missing:
        raise ConfigError(f"missing keys {missing}; required keys are {list(REQUIRED_KEYS)}")

    resolved = {**OPTIONAL_DEFAULTS, **data}
    for key in ("gamma", "epsilon", "tau", "T", "linear_tol", "cubic_tol"):
        resolved[key] = _number(key, resolved[key])
    for key in ("M", "dimension", "snapshot_stride", "seed"):
        resolved[key] = _number(key, resolved[key], integer=True)
    domain = resolved["domain"]
    if not isinstance(domain, (list, tuple)) or len(domain) != 2:
        raise ConfigError(f"'domain' must be a pair [a, b], got {domain!r}")
    resolved["domain"] = [_number("domain", v) for v in domain]
    if not isinstance(resolved["monitors"], (list, tuple)):
        raise ConfigError(f"'monitors' must be a list, got {resolved['monitors']!r}")
    resolved["monitors"] = list(resolved["monitors"])
    if resolved["initial"] not in INITIALS:
        raise ConfigError(f"'initial' must be one of {INITIALS}, got {resolved['initial']!r}")
    if resolved["source"] not in SOURCES:
        raise ConfigError(f"'source' must be one of {SOURCES}, got {resolved['source']!r}")

    try:
        a, b = resolved["domain"]
        grid = GridSpec(M=resolved["M"], d=resolved["dimension"], a=a, b=b)
    except ValueError as ex:
        raise ConfigError(str(ex)) from ex
    config = SolverConfig(
        gamma=resolved["gamma"],
        epsilon=resolved["epsilon"],
        tau=resolved["tau"],
        T=resolved["T"],
        grid=grid,
        linear_tol=resolved["linear_tol"],
        cubic_tol=resolved["cubic_tol"],
        monitors=tuple(resolved["monitors"]),
        snapshot_stride=resolved["snapshot_stride"],
    )
    op = RieszOperator.build(grid, config.gamma, config.epsilon)
    initial = example_initials(resolved["initial"], grid, config.gamma, seed=resolved["seed"])
    warnings = theory_warnings(op, config.tau, initial, forced=resolved["source"] != "none")
    return config, RunManifest(resolved=resolved, warnings=warnings)


class ExitCodeGroup(click.Group):
    """Turns domain exceptions into the documented exit codes instead of tracebacks."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except SolverError as ex:
            logging.error(f"Solver error: {ex}")
            click.echo(f"Error: {ex}", err=True)
            ctx.exit(EXIT_SOLVER)
        except ValueError as ex:
            click.echo(f"Error: {ex}", err=True)
            ctx.exit(EXIT_VALIDATION)
        except OSError as ex:
            click.echo(f"Error: {ex}", err=True)
            ctx.exit(EXIT_IO)


def _global(value, key: str):
    """A subcommand option, falling back to the group-level --config/--csv/--json."""
    if value is not None:
        return value
    return click.get_current_context().obj.get(key)


def _emit(report, csv_path, json_path, config_echo: dict):
    csv_path, json_path = _global(csv_path, "csv"), _global(json_path, "json")
    if csv_path:
        utils.emit_report(report, "csv", csv_path)
    if json_path:
        extra = {"config": config_echo, "version": utils.artifact_version()}
        utils.emit_report(report, "json", json_path, extra)


def _echo_rows(header, rows, float_format: str = "%.6e"):
    click.echo(",".join(header))
    for row in rows:
        click.echo(",".join(utils.format_cell(value, float_format) for value in row))


@click.group(cls=ExitCodeGroup)
@click.option(
    "--threads",
    type=click.IntRange(min=1),
    default=None,
    envvar=THREADS_ENV_VAR,
    show_envvar=True,
    help=f"Worker threads for experiment sweeps (Default is {SWEEP_THREADS})",
)
@click.option("--quiet", "-q", is_flag=True, help="Only log warnings and errors")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON run config (for run)")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="CSV output of the subcommand")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), help="JSON output of the subcommand")
@click.pass_context
def cli(ctx, threads, quiet, config_path, csv_path, json_path):
    """Sixth-order Riesz difference formulas and a maximum-principle preserving fractional Allen-Cahn solver."""
    if quiet:
        logging.getLogger().setLevel(logging.WARNING)
    ctx.obj = {"threads": threads or SWEEP_THREADS, "config": config_path, "csv": csv_path, "json": json_path}


@cli.command()
@click.option("--gamma", type=float, required=True, help="Fractional order in (0, 1) U (1, 2]")
@click.option("--mmax", type=click.IntRange(min=0), required=True, help="Largest index m")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write rows m,g_m to this file")
def coeffs(gamma, mmax, csv_path):
    """Print or save the coefficients g_0..g_mmax."""
    table = coefficient_table(check_gamma(gamma), mmax)
    rows = [(m, table[m]) for m in range(mmax + 1)]
    csv_path = _global(csv_path, "csv")
    if csv_path:
        utils.write_csv(csv_path, ("m", "g_m"), rows, float_format=COEFF_FLOAT_FORMAT)
    else:
        _echo_rows(("m", "g_m"), rows, COEFF_FLOAT_FORMAT)


@cli.command("riesz-apply")
@click.option("--gamma", type=float, required=True, help="Fractional order in (0, 1) U (1, 2]")
@click.option("--m", "M", type=click.IntRange(min=4), required=True, help="Number of cells, h = 1/M")
@click.option("--function", "function", type=click.Choice(["poly4", "custom-csv"]), default="poly4")
@click.option(
    "--input",
    "input_path",
    type=click.Path(exists=True, dir_okay=False),
    help="CSV with a column 'u' sampled at the M+1 closed-grid nodes (for --function custom-csv)",
)
@click.option("--path", type=click.Choice(PATHS), default="dense", help="Matvec path (Default is dense)")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write the rows to this file")
def riesz_apply(gamma, M, function, input_path, path, csv_path):
    """Apply the difference formula on [0, 1] and write x, approx, exact, abserr at the interior nodes."""
    gamma = check_gamma(gamma)
    grid = GridSpec(M=M)
    x = grid.closed_nodes()
    if function == "poly4":
        samples = POLY4(x)
    else:
        if input_path is None:
            raise click.UsageError("--function custom-csv needs --input PATH")
        samples = np.array(utils.read_csv_column(input_path, "u"))
        if samples.size != M + 1:
            raise ValueError(f"{input_path} has {samples.size} samples, expected M+1={M + 1}")
    approx = apply_riesz_formula(gamma, grid.h, samples, path=path)
    interior = x[1:-1]
    if function == "poly4":
        exact = riesz_derivative_poly(POLY4, gamma, interior)
        rows = zip(interior, approx, exact, np.abs(approx - exact))
        logging.info(f"Max abs error {np.max(np.abs(approx - exact)):.6e} for gamma={gamma}, h=1/{M}")
    else:
        rows = ((xj, aj, None, None) for xj, aj in zip(interior, approx))
    header = ("x", "approx", "exact", "abserr")
    csv_path = _global(csv_path, "csv")
    if csv_path:
        utils.write_csv(csv_path, header, rows)
    else:
        _echo_rows(header, rows)


def _snapshot_header(d: int) -> tuple:
    return ("x", "y", "z")[:d] + ("u",)


def _write_snapshots(directory: str, config: SolverConfig, record):
    mesh = config.grid.mesh()
    header = _snapshot_header(config.grid.d)
    paths = []
    for i, (t, state) in enumerate(record.snapshots):
        k = i * config.snapshot_stride
        path = os.path.join(directory, f"snapshot_{k:06d}.csv")
        utils.write_csv(path, header, zip(*mesh, state.values))
        paths.append(path)
    return paths


@cli.command("run")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON run config")
@click.option("--trajectory-csv", type=click.Path(dir_okay=False), help="Write k,t,max_norm,energy per step")
@click.option("--snapshots", "snapshot_dir", type=click.Path(file_okay=False), help="Directory for field snapshots")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), help="Write the run manifest and summary")
def run_command(config_path, trajectory_csv, snapshot_dir, json_path):
    """Integrate the fractional Allen-Cahn equation for the configured problem."""
    config_path = _global(config_path, "config")
    if config_path is None:
        raise click.UsageError("run needs --config PATH")
    trajectory_csv, json_path = _global(trajectory_csv, "csv"), _global(json_path, "json")
    config, manifest = parse_config(config_path)
    if snapshot_dir and "snapshots" not in config.monitors:
        config = replace(config, monitors=config.monitors + ("snapshots",))
    for message in manifest.warnings:
        click.echo(f"Warning: {message}", err=True)

    initial = example_initials(manifest.resolved["initial"], config.grid, config.gamma, seed=manifest.resolved["seed"])
    source = None
    if manifest.resolved["source"] == "manufactured":
        source = manufactured_source_field(config.grid, config.gamma, config.epsilon)
    record = run(config, initial, source)

    if trajectory_csv:
        utils.write_csv(trajectory_csv, record.csv_header, record.csv_rows())
        manifest.outputs["trajectory_csv"] = trajectory_csv
    if snapshot_dir:
        manifest.outputs["snapshots"] = _write_snapshots(snapshot_dir, config, record)
    if json_path:
        payload = manifest.to_dict()
        payload.update({"record": record.to_dict(), "version": utils.artifact_version()})
        utils.write_json(json_path, payload)
    click.echo(f"steps={config.n_steps} max_norm={max(record.max_norms):.16e} final={record.final.max_norm():.16e}")


def _table_outputs(f):
    f = click.option("--json", "json_path", type=click.Path(dir_okay=False), help="Write the JSON report")(f)
    f = click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write the CSV report")(f)
    return f


def _formula_table(ctx, gammas, csv_path, json_path):
    hs = [1.0 / M for M in FORMULA_GRID_SIZES]
    report = harness.convergence_space_formula(gammas, hs, threads=ctx.obj["threads"])
    _emit(report, csv_path, json_path, {"gammas": list(gammas), "hs": hs})
    _echo_rows(report.csv_header, report.csv_rows())


@cli.command()
@_table_outputs
@click.pass_context
def table1(ctx, csv_path, json_path):
    """Formula errors and orders for gamma in (1, 2]."""
    _formula_table(ctx, TABLE1_GAMMAS, csv_path, json_path)


@cli.command()
@_table_outputs
@click.pass_context
def table2(ctx, csv_path, json_path):
    """Formula errors and orders for gamma in (0, 1)."""
    _formula_table(ctx, TABLE2_GAMMAS, csv_path, json_path)


@cli.command()
@click.option("--epsilon", type=float, default=TABLE3_EPSILON, show_default=True)
@_table_outputs
@click.pass_context
def table3(ctx, epsilon, csv_path, json_path):
    """Errors at t=1 of the forced Allen-Cahn problem with temporal and spatial orders."""
    ladder = [(1.0 / a, 1.0 / b) for a, b in TABLE3_LADDER]
    report = harness.convergence_full(TABLE3_GAMMAS, ladder, epsilon, TABLE3_T, threads=ctx.obj["threads"])
    _emit(report, csv_path, json_path, {"gammas": list(TABLE3_GAMMAS), "ladder": ladder, "epsilon": epsilon})
    _echo_rows(report.csv_header, report.csv_rows())


@cli.command()
@click.option("--gamma", "gammas", type=float, multiple=True, default=MAXPRINCIPLE_GAMMAS, show_default=True)
@click.option("--tau", "taus", type=float, multiple=True, default=MAXPRINCIPLE_TAUS, show_default=True)
@click.option("--h", type=float, default=MAXPRINCIPLE_H, show_default=True)
@click.option("--epsilon", type=float, default=MAXPRINCIPLE_EPSILON, show_default=True)
@click.option("--T", "T", type=float, default=MAXPRINCIPLE_T, show_default=True)
@click.option(
    "--initial",
    type=click.Choice(["maxprinciple", "random"]),
    default="maxprinciple",
    show_default=True,
    help="Smooth bump or a seeded U(-1, 1) draw at every node",
)
@click.option("--seed", type=int, default=RANDOM_INITIAL_SEED, show_default=True, help="Seed for --initial random")
@_table_outputs
@click.pass_context
def maxprinciple(ctx, gammas, taus, h, epsilon, T, initial, seed, csv_path, json_path):
    """Max-norm histories of unforced runs from a bounded initial condition."""
    report = harness.max_principle_experiment(
        gammas, taus, h, epsilon, T, threads=ctx.obj["threads"], initial=initial, seed=seed
    )
    echo = {"gammas": list(gammas), "taus": list(taus), "h": h, "epsilon": epsilon, "T": T, "initial": initial}
    _emit(report, csv_path, json_path, echo)
    click.echo(f"global max norm={report.global_max:.16e} excursions={report.excursions}")


@cli.command()
@click.option("--gamma", type=float, default=MAXPRINCIPLE_GAMMAS[0], show_default=True)
@click.option("--tau", type=float, default=None, help="Step size (Default is a fraction of the energy bound)")
@click.option("--fraction", type=float, default=ENERGY_BOUND_FRACTION, show_default=True)
@click.option("--h", type=float, default=MAXPRINCIPLE_H, show_default=True)
@click.option("--epsilon", type=float, default=MAXPRINCIPLE_EPSILON, show_default=True)
@click.option("--T", "T", type=float, default=MAXPRINCIPLE_T, show_default=True)
@_table_outputs
def energy(gamma, tau, fraction, h, epsilon, T, csv_path, json_path):
    """Discrete-energy history of an unforced run."""
    if tau is None:
        tau = harness.tau_for_bound_fraction(gamma, h, epsilon, fraction, T)
    report = harness.energy_experiment(gamma, tau, h, epsilon, T)
    echo = {"gamma": gamma, "tau": tau, "h": h, "epsilon": epsilon, "T": T, "fraction": fraction}
    _emit(report, csv_path, json_path, echo)
    click.echo(f"tau={tau:.16e} bound={report.bound:.16e} monotone={report.monotone}")


@cli.command()
@click.option("--gamma", type=float, default=ERROR_SURFACE_GAMMA, show_default=True)
@click.option("--tau", type=float, default=ERROR_SURFACE_TAU, show_default=True)
@click.option("--h", type=float, default=ERROR_SURFACE_H, show_default=True)
@click.option("--epsilon", type=float, default=ERROR_SURFACE_EPSILON, show_default=True)
@click.option("--T", "T", type=float, default=1.0, show_default=True)
@click.option("--stride", type=click.IntRange(min=1), default=ERROR_SURFACE_STRIDE, show_default=True)
@_table_outputs
def errorsurface(gamma, tau, h, epsilon, T, stride, csv_path, json_path):
    """Pointwise error of the forced problem over (t, x), plot-ready."""
    report = harness.error_surface_experiment(gamma, tau, h, epsilon, T, stride)
    echo = {"gamma": gamma, "tau": tau, "h": h, "epsilon": epsilon, "T": T, "stride": stride}
    _emit(report, csv_path, json_path, echo)
    click.echo(f"max abs error={report.max_error:.16e}")


def main():
    logging.basicConfig(format=LOG_FORMAT, level=logging.INFO)
    cli()


if __name__ == "__main__":
    main()
