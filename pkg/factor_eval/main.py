import functools
from importlib import metadata
from pathlib import Path

import click
import yaml  # type: ignore
from pydantic import ValidationError

from factor_eval.core import (
    DataValidationError,
    FactorEvalError,
    InvalidConfig,
    NumericalError,
    PanelData,
    TestTunings,
    compute_split_indices,
    floor_fraction,
)
from factor_eval.dgp import generate_dataset
from factor_eval.forecast import Augmentation, recursive_forecast_errors
from factor_eval.log import configure_logging, logger
from factor_eval.mc import ExperimentSpec, run_experiment
from factor_eval.panel_io import load_target_panels, read_panel_csv, write_dataset_csv
from factor_eval.pca import select_num_factors_icp1
from factor_eval.report import TargetBattery, render_battery, render_target_table
from factor_eval.settings import LogLevel, SettingsManager
from factor_eval.stats import TestId, TestResult, Variance, run_battery

try:
    version_number = metadata.version("factoreval")
except metadata.PackageNotFoundError:
    version_number = "0.0.0"

EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class NumericalFailure(click.ClickException):
    exit_code = EXIT_NUMERICAL


class FactorEvalGroup(click.Group):
    """Command group whose usage errors (bad flags, missing files) exit with status 1."""

    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            e.exit_code = EXIT_VALIDATION
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_VALIDATION
            raise


@click.group(cls=FactorEvalGroup)
@click.version_option(version_number)
def cli():
    """Out-of-sample tests of factor-augmented forecasts and their Monte Carlo evaluation."""
    pass


def handle_setting_error(e: ValidationError):
    """Report each validation error as ``path.to.field: message``."""
    for error in e.errors():
        location = ".".join(str(part) for part in error["loc"]) or "config"
        if error["type"] == "missing":
            message = f"{location}: missing required field"
        else:
            message = f"{location}: {error['msg']}"
        click.echo(click.style(message, fg="yellow"), err=True, color=True)

    raise click.ClickException(
        click.style("Program terminated due to configuration errors.", fg="red", bold=True)
    )


def handle_domain_errors(command):
    """Map the package's exceptions onto exit codes 1 (validation) and 2 (numerical)."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            handle_setting_error(e)
        except NumericalError as e:
            where = f" at t={e.t}" if e.t is not None else ""
            raise NumericalFailure(f"{type(e).__name__}{where}: {e}") from e
        except (DataValidationError, InvalidConfig, FactorEvalError) as e:
            raise click.ClickException(f"{type(e).__name__}: {e}") from e

    return wrapper


def parse_value(text: str):
    return yaml.safe_load(text) if text.strip() else None


def set_dotted(mapping: dict, key: str, value) -> None:
    *parents, leaf = key.strip().split(".")
    node = mapping
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise InvalidConfig(f"cannot set {key!r}: {part!r} is not a section")
    node[leaf] = value


def parse_assignments(items) -> dict:
    """``["dgp.N=200", "replications=100"]`` to a nested mapping."""
    mapping: dict = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise InvalidConfig(f"expected key=value, got {item!r}")
        set_dotted(mapping, key, parse_value(value))
    return mapping


def merge(base: dict, extra: dict) -> dict:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    """Read a YAML mapping, or a file of dotted ``key=value`` lines."""
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        loaded = yaml.safe_load(text)
    except yaml.YAMLError:
        loaded = None
    if isinstance(loaded, dict) and not any("=" in str(key) for key in loaded):
        return loaded
    lines = [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]
    return parse_assignments(lines)


def parse_tuning_flag(text: str) -> dict[str, float]:
    overrides = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidConfig(f"expected key=value in --tunings, got {item!r}")
        overrides[key.strip()] = float(value)
    return overrides


def init_runtime(log_level: str, **params):
    setting = SettingsManager.initialize_with_params(log_level=log_level, **params)
    configure_logging(log_level=setting.runtime.log_level)
    return setting


log_level_option = click.option(
    "--log-level",
    "-ll",
    default="INFO",
    show_default=True,
    help="Sets the logging level (e.g., DEBUG, INFO, WARNING, ERROR, CRITICAL).",
    type=click.Choice([level.value for level in LogLevel], case_sensitive=False),  # type: ignore
)


def battery_for_panel(
    panel: PanelData,
    test_tunings: TestTunings,
    r_fixed: int | None,
    r_cap: int,
    standardize: bool,
    augmentation: Augmentation,
    variance: Variance,
) -> tuple[list[TestResult], dict]:
    """Select r on the in-sample rows, run the recursion and the four statistics."""
    split = compute_split_indices(panel.T, test_tunings.g1)
    logger.info(f"T={panel.T}, N={panel.N}, k0={split.k0}, n={split.n}")

    if r_fixed is not None:
        r = r_fixed
    elif augmentation == "average":
        r = 1
    else:
        in_sample = panel.X[: split.k0]
        limit = min(in_sample.shape) - 1
        if r_cap > limit:
            logger.warning(f"r_max={r_cap} lowered to {limit} for the in-sample panel")
            r_cap = limit
        r = select_num_factors_icp1(in_sample, r_cap)
        logger.info(f"IC_p1 selected r={r} on the first {split.k0} observations")

    streams = recursive_forecast_errors(
        panel, split, r, standardize=standardize, augmentation=augmentation
    )
    results = run_battery(streams, test_tunings, variance=variance)
    context = {"T": panel.T, "n": split.n, "r": r, "mse_ratio": round(streams.mse_ratio(), 6)}
    return results, context


@cli.command()
@click.option("--data", "-d", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--target",
    "-t",
    "targets",
    multiple=True,
    help="Column holding the forecast target; repeat for a table over several series.",
)
@click.option(
    "--all-targets",
    is_flag=True,
    default=False,
    help="Use every column in turn as the target, the rest as the panel.",
)
@click.option(
    "--regressors",
    default="ar(1)+intercept",
    show_default=True,
    help="Known regressors: 'intercept' and 'ar(p)' joined by '+'.",
)
@click.option("--index-col", default=None, help="Date or period column to ignore.")
@click.option(
    "--config",
    "-c",
    default=None,
    type=click.Path(exists=True, dir_okay=False),
    help="YAML file whose 'tunings' section sets per-statistic tunings.",
)
@click.option("--tunings", default="", help="Inline overrides, e.g. 'g2.lambda2=0.7,mu0=0.45'.")
@click.option("--r-max", type=int, default=None, help="Largest factor count tried by IC_p1.")
@click.option("--r", "r_fixed", type=int, default=None, help="Use this many factors, skip IC_p1.")
@click.option("--standardize", is_flag=True, default=False, help="Z-score the panel per window.")
@click.option(
    "--augmentation",
    type=click.Choice(["pc", "average"]),
    default="pc",
    show_default=True,
    help="Principal-component factors or the cross-sectional average.",
)
@click.option(
    "--variance",
    type=click.Choice(["iid", "newey-west", "andrews"]),
    default="iid",
    show_default=True,
)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["text", "csv", "json"]),
    default="text",
    show_default=True,
)
@click.option("--out", "-o", default=None, type=click.Path(dir_okay=False))
@log_level_option
@handle_domain_errors
def test(
    data,
    targets,
    all_targets,
    regressors,
    index_col,
    config,
    tunings,
    r_max,
    r_fixed,
    standardize,
    augmentation,
    variance,
    fmt,
    out,
    log_level,
):
    """Run g1 and the power-enhanced g2, g3, g4 on a CSV panel.

    With one target the full battery is printed. With several targets (or
    --all-targets) each series is tested against the remaining columns and one
    row of p-values per target is printed; a target whose recursion fails
    numerically is reported as failed and the command exits with status 2.
    """
    if all_targets == bool(targets):
        raise click.UsageError("give either --target (one or more) or --all-targets")
    setting = init_runtime(log_level, r_max=r_max)
    precision = setting.runtime.output_precision

    test_tunings = TestTunings(**load_config(config).get("tunings", {}))
    test_tunings = test_tunings.with_overrides(parse_tuning_flag(tunings))
    pi0_values = {test_tunings.for_test(test_id).pi0 for test_id in TestId}
    if len(pi0_values) > 1:
        raise InvalidConfig(f"all statistics must share pi0, got {sorted(pi0_values)}")

    panels = load_target_panels(
        data, None if all_targets else list(targets), regressors, index_col
    )
    options = dict(
        test_tunings=test_tunings,
        r_fixed=r_fixed,
        r_cap=setting.runtime.r_max,
        standardize=standardize,
        augmentation=augmentation,
        variance=variance,
    )

    if len(panels) == 1:
        target, panel = next(iter(panels.items()))
        results, context = battery_for_panel(panel, **options)
        output = render_battery(results, fmt, precision, {"target": target, **context})
        failed = []
    else:
        rows, failed = [], []
        for target, panel in panels.items():
            logger.info(f"Testing target {target}")
            try:
                results, context = battery_for_panel(panel, **options)
            except NumericalError as e:
                logger.error(f"target {target} failed ({type(e).__name__}, t={e.t}): {e}")
                failed.append(target)
                rows.append(TargetBattery(target, error=f"{type(e).__name__}: {e}"))
                continue
            rows.append(TargetBattery(target, {"target": target, **context}, results))
        output = render_target_table(rows, fmt, precision)

    click.echo(output)
    if out:
        Path(out).write_text(output + "\n", encoding="utf-8")
        logger.success(f"Results written to {out}")
    if failed:
        raise NumericalFailure(f"{len(failed)} target(s) failed numerically: {', '.join(failed)}")


@cli.command()
@click.option("--config", "-c", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Overrides dgp.seed of the config.")
@click.option("--workers", "-w", type=int, default=None, help="Worker threads.")
@click.option("--set", "assignments", multiple=True, help="Dotted override, e.g. dgp.N=200.")
@click.option(
    "--dump-data",
    default=None,
    type=click.Path(dir_okay=False),
    help="Also write one dataset drawn from the dgp section as CSV.",
)
@click.option("--no-progress", is_flag=True, default=False)
@log_level_option
@handle_domain_errors
def simulate(config, out, seed, workers, assignments, dump_data, no_progress, log_level):
    """Estimate rejection frequencies over a beta grid and tuning grid."""
    setting = init_runtime(log_level, seed=seed, max_worker_count=workers)
    raw = merge(load_config(config), parse_assignments(assignments))
    dgp_section = raw.setdefault("dgp", {})
    if seed is not None or "seed" not in dgp_section:
        dgp_section["seed"] = setting.runtime.seed
    spec = ExperimentSpec(**raw)

    if dump_data:
        write_dataset_csv(generate_dataset(spec.dgp), dump_data)
        logger.info(f"Dataset written to {dump_data}")

    table = run_experiment(
        spec, max_workers=setting.runtime.max_worker_count, progress=not no_progress
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = table.render_text(setting.runtime.output_precision)
    table.to_csv(out_dir / "rejections.csv")
    (out_dir / "rejections.txt").write_text(text + "\n", encoding="utf-8")
    click.echo(text)

    invalid = table.invalid_cells()
    if invalid:
        raise click.ClickException(
            f"{len(invalid)} cell(s) have more than 1% failed replications (marked '*')"
        )
    logger.success(f"Rejection table written to {out_dir}")


@cli.command("select-factors")
@click.option("--data", "-d", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target", "-t", default=None, help="Column excluded from the panel.")
@click.option("--index-col", default=None, help="Date or period column to ignore.")
@click.option("--r-max", type=int, default=None, help="Largest factor count tried.")
@click.option(
    "--in-sample",
    type=click.FloatRange(0.0, 1.0, min_open=True),
    default=1.0,
    show_default=True,
    help="Leading share of the sample used for selection.",
)
@log_level_option
@handle_domain_errors
def select_factors(data, target, index_col, r_max, in_sample, log_level):
    """Print the IC_p1 factor count of a CSV panel."""
    setting = init_runtime(log_level, r_max=r_max)
    _, X, _ = read_panel_csv(data, target, index_col)
    rows = X.shape[0] if in_sample == 1.0 else floor_fraction(X.shape[0], in_sample)
    r = select_num_factors_icp1(X[:rows], setting.runtime.r_max)
    click.echo(r)


if __name__ == "__main__":
    cli()
