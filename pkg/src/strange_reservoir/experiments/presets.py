"""Named experiment configs for the benchmark runs."""

import dataclasses
from typing import Callable, Dict, Final

from strange_reservoir.embedding.reservoir import Recipe
from strange_reservoir.experiments.config import (
    ConfigError,
    DiagnosticsSpec,
    ExperimentConfig,
    ExperimentKind,
    ReadoutKind,
    ReadoutSpec,
    ReservoirSpec,
    Thresholds,
)
from strange_reservoir.learning.readout import (
    PAPER_HIDDEN,
    PAPER_LEARNING_RATES,
)
from strange_reservoir.numerics.dynsys import SystemName

DESK: Final = "desk"
PAPER: Final = "paper"

# forecast bounds for the desk run, set from its measured ridge error and
# the noise floor of the filtering target
DESK_THRESHOLDS: Final = Thresholds(
    nrmse=0.07, filter_mse=0.25, baseline_factor=1.2
)


def rossler() -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.RECONSTRUCT,
        name="rossler",
        system=SystemName.ROSSLER,
        initial_condition=[2.0, 1.0, 5.0],
        total_time=120.0,
        washout_time=60.0,
        reservoir=ReservoirSpec(n=7),
    )


def lorenz() -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.RECONSTRUCT,
        name="lorenz",
        system=SystemName.LORENZ,
        initial_condition=[0.0, 1.0, 1.05],
        total_time=40.0,
        washout_time=20.0,
        reservoir=ReservoirSpec(n=7),
    )


def vdp_sweep() -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.VDP_SWEEP,
        name="vdp_sweep",
        system=SystemName.VANDERPOL,
        initial_condition=[-4.0, 5.0],
        total_time=40.0,
        washout_time=30.0,
        reservoir=ReservoirSpec(n=5),
        pca_components=2,
        mu_values=[0.5, 1.0, 1.5, 2.0, 2.5],
    )


def forecast_desk() -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.FORECAST,
        name="forecast_desk",
        system=SystemName.LORENZ,
        initial_condition=[0.0, 1.0, 1.05],
        total_time=1100.0,
        washout_time=100.0,
        reservoir=ReservoirSpec(recipe=Recipe.HAAR_SCALED, n=20, scale=0.9),
        noise_variance=0.25,
        readout=ReadoutSpec(kinds=[ReadoutKind.RIDGE], degree=2, lam=1e-8),
        thresholds=dataclasses.replace(DESK_THRESHOLDS),
    )


def forecast_paper() -> ExperimentConfig:
    return ExperimentConfig(
        kind=ExperimentKind.FORECAST,
        name="forecast_paper",
        system=SystemName.LORENZ,
        initial_condition=[0.0, 1.0, 1.05],
        total_time=11000.0,
        washout_time=1000.0,
        reservoir=ReservoirSpec(recipe=Recipe.HAAR_SCALED, n=20, scale=0.9),
        noise_variance=0.25,
        readout=ReadoutSpec(
            kinds=[ReadoutKind.RIDGE, ReadoutKind.MLP],
            hidden=list(PAPER_HIDDEN),
            learning_rates=list(PAPER_LEARNING_RATES),
            epochs=7000,
            patience=500,
            batch_size=10000,
        ),
    )


def diagnose_lorenz() -> ExperimentConfig:
    cfg = lorenz()
    return dataclasses.replace(
        cfg, name="diagnose_lorenz", diagnostics=DiagnosticsSpec()
    )


PRESETS: Final[Dict[str, Callable[[], ExperimentConfig]]] = {
    "rossler": rossler,
    "lorenz": lorenz,
    "vdp_sweep": vdp_sweep,
    "forecast_desk": forecast_desk,
    "forecast_paper": forecast_paper,
    "diagnose_lorenz": diagnose_lorenz,
}


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


def rescale(cfg: ExperimentConfig, scale: str) -> ExperimentConfig:
    """Switch a forecast config between the desk and paper-scale time
    spans and readouts, forecast thresholds included. Other kinds are
    returned unchanged."""
    if scale not in (DESK, PAPER):
        raise ConfigError(f"unknown scale {scale!r}")
    if cfg.kind is not ExperimentKind.FORECAST:
        return cfg
    template = forecast_paper() if scale == PAPER else forecast_desk()
    return dataclasses.replace(
        cfg,
        total_time=template.total_time,
        washout_time=template.washout_time,
        readout=template.readout,
        thresholds=dataclasses.replace(
            cfg.thresholds,
            nrmse=template.thresholds.nrmse,
            filter_mse=template.thresholds.filter_mse,
            baseline_factor=template.thresholds.baseline_factor,
        ),
    )
