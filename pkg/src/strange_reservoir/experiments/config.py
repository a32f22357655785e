"""Declarative experiment configuration.

A config is a tree of dataclasses built from JSON. Unknown keys are
rejected, and every cross-field rule is checked in ``__post_init__`` so a
loaded config is ready to run.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar, Union

from strange_reservoir.embedding.reservoir import Recipe
from strange_reservoir.learning.readout import (
    DESK_BATCH_SIZE,
    DESK_EPOCHS,
    DESK_HIDDEN,
    DESK_LEARNING_RATES,
    DESK_PATIENCE,
    TrainConfig,
)
from strange_reservoir.numerics.dynsys import (
    SYSTEM_DIMENSIONS,
    DynamicalSystem,
    ObservationFn,
    ObservationKind,
    SystemName,
)

T = TypeVar("T")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configs."""


class ExperimentKind(str, Enum):
    RECONSTRUCT = "reconstruct"
    VDP_SWEEP = "vdp_sweep"
    FORECAST = "forecast"


class ReadoutKind(str, Enum):
    RIDGE = "ridge"
    MLP = "mlp"


@dataclass
class ReservoirSpec:
    recipe: Recipe = Recipe.UNIFORM_NORMALIZED
    n: int = 7
    seed: int = 0
    scale: Optional[float] = None

    def __post_init__(self) -> None:
        try:
            self.recipe = Recipe(self.recipe)
        except ValueError:
            raise ConfigError(
                f"unknown reservoir recipe {self.recipe!r}"
            ) from None
        if self.recipe is Recipe.CUSTOM:
            raise ConfigError("custom reservoirs cannot be configured")
        if self.n < 1:
            raise ConfigError("reservoir dimension must be positive")
        needs_scale = self.recipe in (Recipe.HAAR_SCALED, Recipe.DIAGONAL)
        if needs_scale and not (
            self.scale is not None and 0.0 < self.scale < 1.0
        ):
            raise ConfigError(
                f"{self.recipe.value} reservoirs need a scale in (0, 1)"
            )


@dataclass
class ObservationSpec:
    kind: ObservationKind = ObservationKind.COORDINATE
    index: int = 0
    weights: Optional[List[float]] = None
    offset: float = 0.0

    def __post_init__(self) -> None:
        try:
            self.kind = ObservationKind(self.kind)
        except ValueError:
            raise ConfigError(
                f"unknown observation kind {self.kind!r}"
            ) from None
        if self.kind is ObservationKind.CUSTOM:
            raise ConfigError("custom observations cannot be configured")

    def build(self) -> ObservationFn:
        if self.kind is ObservationKind.COORDINATE:
            return ObservationFn.coordinate(self.index)
        return ObservationFn.linear(self.weights or [], self.offset)


@dataclass
class ReadoutSpec:
    kinds: List[ReadoutKind] = field(
        default_factory=lambda: [ReadoutKind.RIDGE]
    )
    degree: int = 2
    lam: float = 1e-8
    hidden: List[int] = field(default_factory=lambda: list(DESK_HIDDEN))
    learning_rates: List[float] = field(
        default_factory=lambda: list(DESK_LEARNING_RATES)
    )
    epochs: int = DESK_EPOCHS
    patience: int = DESK_PATIENCE
    batch_size: Optional[int] = DESK_BATCH_SIZE
    train_fraction: float = 0.8

    def __post_init__(self) -> None:
        try:
            self.kinds = [ReadoutKind(k) for k in self.kinds]
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not self.kinds:
            raise ConfigError("at least one readout kind is required")
        if self.degree < 1 or self.lam < 0:
            raise ConfigError("readout needs degree >= 1 and lam >= 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("hidden layer sizes must be positive")
        try:
            self.train_config(0)
        except ValueError as e:
            raise ConfigError(f"invalid training schedule: {e}") from e

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rates=list(self.learning_rates),
            epochs=self.epochs,
            patience=self.patience,
            batch_size=self.batch_size,
            seed=seed,
        )


@dataclass
class DiagnosticsSpec:
    esp_trials: int = 4
    esp_steps: int = 2000
    immersion_samples: int = 50
    injectivity_samples: int = 2000
    # GS truncation depth; long backward orbits of dissipative flows blow up
    depth: int = 60
    periods: List[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.esp_trials < 2:
            raise ConfigError("esp_trials must be at least 2")
        if min(self.esp_steps, self.immersion_samples, self.depth) < 1:
            raise ConfigError("diagnostic sizes must be positive")
        if self.injectivity_samples < 100:
            raise ConfigError("injectivity needs at least 100 samples")


@dataclass
class Thresholds:
    explained_ratio: float = 0.95
    lobe_ratio: float = 2.0
    closed_gap_deg: float = 30.0
    nrmse: float = 0.05
    filter_mse: float = 0.05
    baseline_factor: float = 5.0


_NESTED: Dict[str, type] = {
    "reservoir": ReservoirSpec,
    "observation": ObservationSpec,
    "readout": ReadoutSpec,
    "diagnostics": DiagnosticsSpec,
    "thresholds": Thresholds,
}


@dataclass
class ExperimentConfig:
    """Everything one run needs. Times are in the flow's time units."""

    kind: ExperimentKind
    name: str
    system: SystemName
    initial_condition: List[float]
    params: Dict[str, float] = field(default_factory=dict)
    dt: float = 0.01
    total_time: float = 120.0
    washout_time: float = 60.0
    reservoir: ReservoirSpec = field(default_factory=ReservoirSpec)
    observation: ObservationSpec = field(default_factory=ObservationSpec)
    pca_components: int = 3
    mu_values: List[float] = field(default_factory=list)
    noise_variance: float = 0.0
    readout: Optional[ReadoutSpec] = None
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    thresholds: Thresholds = field(default_factory=Thresholds)
    output_dir: str = "out"

    def __post_init__(self) -> None:
        try:
            self.kind = ExperimentKind(self.kind)
            self.system = SystemName(self.system)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not self.name or "/" in self.name:
            raise ConfigError(f"invalid experiment name {self.name!r}")
        q = SYSTEM_DIMENSIONS[self.system]
        try:
            self.initial_condition = [
                float(v) for v in self.initial_condition
            ]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid initial condition: {e}") from e
        if len(self.initial_condition) != q:
            raise ConfigError(
                f"{self.system.value} needs a {q}-dimensional initial"
                f" condition, got {len(self.initial_condition)}"
            )
        if (
            self.reservoir.recipe is Recipe.TAKENS_SHIFT
            and self.reservoir.n != 2 * q + 1
        ):
            raise ConfigError(
                f"the delay reservoir of {self.system.value} has N={2 * q + 1}"
            )
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not 0 <= self.washout_time < self.total_time:
            raise ConfigError(
                f"washout {self.washout_time} must be shorter than the"
                f" total time {self.total_time}"
            )
        if self.post_washout_steps < 2:
            raise ConfigError("nothing is left after the washout")
        try:
            self.dynamical_system()
            self.observation.build().validate_for(self.dynamical_system())
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not 2 <= self.pca_components <= self.reservoir.n:
            raise ConfigError(
                f"pca_components must lie in 2..{self.reservoir.n}"
            )
        if self.noise_variance < 0:
            raise ConfigError("noise variance must be non-negative")
        if self.kind is ExperimentKind.VDP_SWEEP:
            if self.system is not SystemName.VANDERPOL:
                raise ConfigError("vdp_sweep runs the vanderpol system")
            if not self.mu_values or min(self.mu_values) < 0:
                raise ConfigError("vdp_sweep needs non-negative mu_values")
        if self.kind is ExperimentKind.FORECAST and self.readout is None:
            raise ConfigError("forecast configs need a readout section")

    @property
    def total_steps(self) -> int:
        return int(round(self.total_time / self.dt))

    @property
    def washout_steps(self) -> int:
        return int(round(self.washout_time / self.dt))

    @property
    def post_washout_steps(self) -> int:
        return self.total_steps - self.washout_steps

    def dynamical_system(
        self, params: Optional[Dict[str, float]] = None
    ) -> DynamicalSystem:
        return DynamicalSystem(
            self.system, dict(params or self.params), h=self.dt
        )

    def with_overrides(
        self,
        seed: Optional[int] = None,
        output_dir: Optional[Union[str, Path]] = None,
    ) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(
                cfg, reservoir=dataclasses.replace(cfg.reservoir, seed=seed)
            )
        if output_dir is not None:
            cfg = dataclasses.replace(cfg, output_dir=str(output_dir))
        return cfg

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.name

    def to_dict(self) -> Dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("a config must be a JSON object")
        values = dict(data)
        for key, spec_cls in _NESTED.items():
            if values.get(key) is not None:
                values[key] = _build(spec_cls, values[key], key)
        return _build(cls, values, "config")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_dict(data)

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8"
        )


def _build(cls: Type[T], data: Any, where: str) -> T:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}  # type: ignore
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value
