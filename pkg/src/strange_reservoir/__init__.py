import logging
import multiprocessing
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click

from strange_reservoir.__version__ import __version__
from strange_reservoir.embedding.diagnostics import (
    check_esp,
    check_immersion_rank,
    check_injectivity,
    check_reachability,
)
from strange_reservoir.embedding.reservoir import (
    build_haar,
    build_takens,
    build_uniform,
    drive,
    gs_series,
)
from strange_reservoir.experiments.config import (
    ConfigError,
    ExperimentConfig,
    ExperimentKind,
)
from strange_reservoir.experiments.pipelines import (
    run_diagnostics_suite,
    run_experiment,
)
from strange_reservoir.experiments.presets import (
    DESK,
    PAPER,
    get_preset,
    rescale,
)
from strange_reservoir.learning.readout import fit_mlp, fit_ridge, predict
from strange_reservoir.storage.persistence import load, save
from strange_reservoir.utils.files import gen_config_files_in_dir
from strange_reservoir.utils.output import out
from strange_reservoir.utils.report import Report

SEED_ENVVAR = "STRANGE_RESERVOIR_SEED"
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

__all__ = [
    "__version__",
    "build_haar",
    "build_takens",
    "build_uniform",
    "check_esp",
    "check_immersion_rank",
    "check_injectivity",
    "check_reachability",
    "drive",
    "fit_mlp",
    "fit_ridge",
    "gen_config_files_in_dir",
    "gs_series",
    "load",
    "main",
    "predict",
    "run_experiment",
    "save",
]


@dataclass
class ProcessResult:
    name: str
    success: bool
    passed: bool = False
    failures: List[str] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    error_message: Optional[str] = None
    traceback_str: Optional[str] = None


def process_config(args: Tuple[ExperimentConfig, bool]) -> ProcessResult:
    cfg, diagnose = args
    try:
        if diagnose:
            reports = run_diagnostics_suite(cfg)
            return ProcessResult(
                name=cfg.name,
                success=True,
                passed=all(r.passed for r in reports),
                failures=[r.check for r in reports if not r.passed],
                metrics={r.check: r.statistic for r in reports},
                checks={r.check: r.passed for r in reports},
            )
        result = run_experiment(cfg)
    except Exception as e:
        return ProcessResult(
            name=cfg.name,
            success=False,
            error_message=f"{type(e).__name__}: {e}",
            traceback_str=traceback.format_exc(),
        )
    return ProcessResult(
        name=cfg.name,
        success=True,
        passed=result.passed,
        failures=result.failures,
        metrics=result.metrics,
        checks=result.checks,
    )


def collect_configs(
    config: Optional[str],
    preset: Optional[str],
    report: Report,
    fallback: Callable[[], ExperimentConfig],
) -> List[ExperimentConfig]:
    """Configs named by ``--config`` (a file or a directory of ``*.json``)
    or the command's preset. Unreadable configs are reported as failures.

    ``--preset`` rescales forecast configs only when it is given.
    """
    if config is None:
        return [rescale(fallback(), preset or DESK)]
    p = Path(config)
    sources = list(gen_config_files_in_dir(p)) if p.is_dir() else [p]
    configs = []
    for src in sources:
        try:
            cfg = ExperimentConfig.load(src)
            configs.append(cfg if preset is None else rescale(cfg, preset))
        except ConfigError as e:
            report.failed(str(src), str(e))
    return configs


def execute(
    ctx: click.Context,
    configs: List[ExperimentConfig],
    kind: Optional[ExperimentKind],
    seed: Optional[int],
    out_dir: Optional[str],
) -> None:
    report: Report = ctx.obj["report"]
    jobs = []
    for cfg in configs:
        if kind is not None and cfg.kind is not kind:
            report.failed(
                cfg.name,
                f"a {cfg.kind.value} config cannot run as {kind.value}",
            )
            continue
        jobs.append(cfg.with_overrides(seed=seed, output_dir=out_dir))

    args_list = [(cfg, kind is None) for cfg in jobs]
    if len(args_list) > 1:
        with multiprocessing.Pool() as pool:
            results = pool.map(process_config, args_list)
    else:
        results = [process_config(args) for args in args_list]

    for result in results:
        if not result.success:
            if report.verbose and result.traceback_str:
                out(result.traceback_str)
            report.failed(result.name, result.error_message or "")
        else:
            report.done(
                result.name,
                result.passed,
                result.failures,
                result.metrics,
                result.checks,
            )

    if report.verbose or not report.quiet:
        error_msg = "Oh no! 💥 💔 💥"
        out(error_msg if report.return_code else "All done! ✨ 🍰 ✨")
        click.echo(str(report), err=True)
    ctx.exit(report.return_code)


def run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    func = click.option(
        "--preset",
        type=click.Choice([DESK, PAPER]),
        default=None,
        help=(
            "Time span and readout scale of forecast runs. Presets run at"
            " desk scale unless told otherwise."
        ),
    )(func)
    func = click.option(
        "--out-dir",
        type=click.Path(file_okay=False),
        default=None,
        help="Write outputs below this directory instead of the config's.",
    )(func)
    func = click.option(
        "--seed",
        type=int,
        default=None,
        envvar=SEED_ENVVAR,
        show_envvar=True,
        help="Reservoir seed; overrides the config.",
    )(func)
    func = click.option(
        "-c",
        "--config",
        type=click.Path(exists=True, file_okay=True, dir_okay=True),
        default=None,
        help="A JSON config, or a directory searched for *.json configs.",
    )(func)
    return func


@click.group()
@click.version_option(__version__)
@click.option(
    "-q",
    "--quiet",
    is_flag=True,
    help="Don't emit non-error messages to stderr.",
)
@click.option(
    "-v",
    "--verbose",
    is_flag=True,
    help="Also emit every metric, debug logs and tracebacks of failed runs.",
)
@click.pass_context
def main(ctx: click.Context, quiet: bool, verbose: bool) -> None:
    """Reservoir embeddings of chaotic flows: reconstruct attractors,
    forecast from noisy observations and check embedding hypotheses."""
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    ctx.ensure_object(dict)
    ctx.obj["report"] = Report(quiet=quiet, verbose=verbose)


@main.command()
@run_options
@click.option(
    "--system",
    type=click.Choice(["rossler", "lorenz"]),
    default="rossler",
    show_default=True,
    help="Preset to run when no config is given.",
)
@click.pass_context
def reconstruct(
    ctx: click.Context,
    config: Optional[str],
    seed: Optional[int],
    out_dir: Optional[str],
    preset: Optional[str],
    system: str,
) -> None:
    """Embed an attractor in reservoir space and project it onto its
    principal components."""
    report = ctx.obj["report"]
    configs = collect_configs(
        config, preset, report, lambda: get_preset(system)
    )
    execute(ctx, configs, ExperimentKind.RECONSTRUCT, seed, out_dir)


@main.command("vdp-sweep")
@run_options
@click.pass_context
def vdp_sweep(
    ctx: click.Context,
    config: Optional[str],
    seed: Optional[int],
    out_dir: Optional[str],
    preset: Optional[str],
) -> None:
    """Drive one reservoir with Van der Pol cycles over a range of
    damping parameters."""
    report = ctx.obj["report"]
    configs = collect_configs(
        config, preset, report, lambda: get_preset("vdp_sweep")
    )
    execute(ctx, configs, ExperimentKind.VDP_SWEEP, seed, out_dir)


@main.command()
@run_options
@click.pass_context
def forecast(
    ctx: click.Context,
    config: Optional[str],
    seed: Optional[int],
    out_dir: Optional[str],
    preset: Optional[str],
) -> None:
    """Filter noisy observations and forecast one step ahead."""
    report = ctx.obj["report"]
    name = f"forecast_{preset or DESK}"
    configs = collect_configs(config, preset, report, lambda: get_preset(name))
    execute(ctx, configs, ExperimentKind.FORECAST, seed, out_dir)


@main.command()
@run_options
@click.option(
    "--system",
    type=click.Choice(["rossler", "lorenz"]),
    default="lorenz",
    show_default=True,
    help="Preset to diagnose when no config is given.",
)
@click.pass_context
def diagnose(
    ctx: click.Context,
    config: Optional[str],
    seed: Optional[int],
    out_dir: Optional[str],
    preset: Optional[str],
    system: str,
) -> None:
    """Check the embedding hypotheses on the configured reservoir."""
    report = ctx.obj["report"]
    name = "diagnose_lorenz" if system == "lorenz" else system
    configs = collect_configs(config, preset, report, lambda: get_preset(name))
    execute(ctx, configs, None, seed, out_dir)


if __name__ == "__main__":
    main()
