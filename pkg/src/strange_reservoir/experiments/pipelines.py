"""End-to-end runs: integrate, observe, drive, project or learn, and write
CSV, SVG and ``.srj`` outputs under ``<output_dir>/<name>/``."""

import json
import logging
import math
import multiprocessing
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Final, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.cluster.vq import kmeans2

from strange_reservoir.embedding.diagnostics import (
    HypothesisReport,
    check_embedding_dimension,
    check_esp,
    check_immersion_rank,
    check_injectivity,
    check_reachability,
)
from strange_reservoir.embedding.reservoir import (
    Recipe,
    ReservoirSystem,
    build_diagonal,
    build_haar,
    build_takens,
    build_uniform,
    drive,
)
from strange_reservoir.experiments import plots, tables
from strange_reservoir.experiments.config import (
    ExperimentConfig,
    ExperimentKind,
    ReadoutKind,
    ReservoirSpec,
)
from strange_reservoir.learning.readout import (
    FeatureMap,
    MlpModel,
    Readout,
    add_noise,
    fit_mlp,
    fit_ridge,
    mlp_template,
    mse,
    nrmse,
    predict_batch,
)
from strange_reservoir.numerics.dynsys import SystemName, observe, orbit
from strange_reservoir.numerics.linalg import pca_project
from strange_reservoir.storage import persistence

logger = logging.getLogger(__name__)

# independent random streams derived from the reservoir seed
NOISE_STREAM: Final = 1
TRAINING_STREAM: Final = 2
DIAGNOSTICS_STREAM: Final = 3
CLUSTER_STREAM: Final = 4

FORECAST_WINDOW: Final = 10.0


class MetricError(ArithmeticError):
    """Raised when a run produces a non-finite metric."""


@dataclass
class ExperimentResult:
    kind: ExperimentKind
    name: str
    paths: List[Path] = field(default_factory=list)
    explained_variance: List[float] = field(default_factory=list)
    reports: List[HypothesisReport] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    seconds: float = 0.0

    def add_metric(
        self, name: str, value: float, passed: Optional[bool] = None
    ) -> None:
        value = float(value)
        if not math.isfinite(value):
            raise MetricError(f"{self.name}: metric {name} is {value}")
        self.metrics[name] = value
        if passed is not None:
            self.checks[name] = bool(passed)

    @property
    def passed(self) -> bool:
        return all(self.checks.values()) and all(
            r.passed for r in self.reports
        )

    @property
    def failures(self) -> List[str]:
        failed = [name for name, ok in self.checks.items() if not ok]
        return failed + [r.check for r in self.reports if not r.passed]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "name": self.name,
            "paths": [str(p) for p in self.paths],
            "explained_variance": self.explained_variance,
            "reports": [r.to_dict() for r in self.reports],
            "metrics": self.metrics,
            "checks": self.checks,
            "flags": self.flags,
            "passed": self.passed,
        }


@contextmanager
def _tracked_outputs(result: ExperimentResult) -> Iterator[List[Path]]:
    """Remove everything written so far when the run fails."""
    try:
        yield result.paths
    except BaseException:
        for path in result.paths:
            path.unlink(missing_ok=True)
        result.paths.clear()
        raise


def build_reservoir(spec: ReservoirSpec, q: int) -> ReservoirSystem:
    rng = np.random.default_rng(spec.seed)
    if spec.recipe is Recipe.UNIFORM_NORMALIZED:
        return build_uniform(spec.n, rng, seed=spec.seed)
    if spec.recipe is Recipe.HAAR_SCALED:
        return build_haar(spec.n, spec.scale, rng, seed=spec.seed)
    if spec.recipe is Recipe.DIAGONAL:
        return build_diagonal(spec.n, spec.scale, rng, seed=spec.seed)
    return build_takens(q)


def stream(cfg: ExperimentConfig, which: int) -> np.random.Generator:
    return np.random.default_rng([cfg.reservoir.seed, which])


def simulate(
    cfg: ExperimentConfig, params: Optional[Dict[str, float]] = None
) -> np.ndarray:
    """``total_steps`` phase points starting at the initial condition."""
    sys = cfg.dynamical_system(params)
    return orbit(sys, np.array(cfg.initial_condition), cfg.total_steps - 1)


def lobe_ratio(points: np.ndarray, rng: np.random.Generator) -> float:
    """Centroid distance of a 2-means split over the RMS distance of the
    points to their own centroid."""
    centroids, labels = kmeans2(points, 2, minit="++", seed=rng)
    if len(np.unique(labels)) < 2:
        return 0.0
    within = np.sqrt(np.mean(np.sum((points - centroids[labels]) ** 2, 1)))
    between = float(np.linalg.norm(centroids[0] - centroids[1]))
    return between / within if within > 0 else math.inf


def closed_curve_gap(points: np.ndarray) -> float:
    """Largest gap, in degrees, between the sorted polar angles of the
    points about their centroid.

    Each coordinate is scaled to unit variance first, so a long thin
    ellipse scores like the circle it is an affine image of.
    """
    centred = np.asarray(points, dtype=float)[:, :2]
    centred = centred - centred.mean(axis=0)
    spread = centred.std(axis=0)
    centred = centred / np.where(spread > 0.0, spread, 1.0)
    angles = np.sort(np.arctan2(centred[:, 1], centred[:, 0]))
    gaps = np.diff(angles)
    wrap = 2.0 * math.pi - (angles[-1] - angles[0])
    return math.degrees(max(float(gaps.max(initial=0.0)), wrap))


def _write_summary(result: ExperimentResult, run_dir: Path) -> None:
    path = run_dir / "summary.json"
    result.paths.append(path)
    path.write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def run_reconstruct(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.kind is not ExperimentKind.RECONSTRUCT:
        raise ValueError(f"{cfg.name} is a {cfg.kind.value} config")
    started = time.perf_counter()
    result = ExperimentResult(cfg.kind, cfg.name)
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    sys = cfg.dynamical_system()
    with _tracked_outputs(result) as written:
        points = simulate(cfg)
        omega = cfg.observation.build()
        res = build_reservoir(cfg.reservoir, sys.q)
        traj = drive(
            res, observe(omega, points), washout_len=cfg.washout_steps
        )
        kept = traj.kept
        pca = pca_project(kept, cfg.pca_components)
        start = cfg.washout_steps

        written.append(
            tables.write_table(
                tables.phase_frame(points, cfg.dt), run_dir / "phase.csv"
            )
        )
        written.append(
            tables.write_table(
                tables.matrix_frame(kept, "x", cfg.dt, start),
                run_dir / "states.csv",
            )
        )
        written.append(
            tables.write_table(
                tables.matrix_frame(
                    pca.projections, "pc", cfg.dt, start, first_index=1
                ),
                run_dir / "projected.csv",
            )
        )
        written.append(persistence.save(res, run_dir / "reservoir"))
        written.append(
            plots.scatter(
                points[start:, :3],
                run_dir / "attractor.svg",
                f"{sys.name.value} attractor",
            )
        )
        written.append(
            plots.scatter(
                pca.projections[:, :3],
                run_dir / "projected.svg",
                f"reservoir states, first {min(3, cfg.pca_components)} PCs",
                labels=("PC1", "PC2", "PC3"),
            )
        )

        result.explained_variance = pca.explained_variance
        result.add_metric("post_washout_samples", len(kept))
        result.add_metric(
            "explained_ratio",
            pca.explained_ratio,
            pca.explained_ratio > cfg.thresholds.explained_ratio,
        )
        if sys.name is SystemName.LORENZ:
            ratio = lobe_ratio(
                pca.projections[:, :3], stream(cfg, CLUSTER_STREAM)
            )
            result.add_metric(
                "lobe_ratio", ratio, ratio > cfg.thresholds.lobe_ratio
            )
        result.seconds = time.perf_counter() - started
        _write_summary(result, run_dir)
    logger.info("%s finished in %.2fs", cfg.name, result.seconds)
    return result


def _vdp_branch(args: Tuple[ExperimentConfig, float]) -> dict:
    cfg, mu = args
    sys = cfg.dynamical_system({"mu": mu})
    points = simulate(cfg, {"mu": mu})
    res = build_reservoir(cfg.reservoir, sys.q)
    z = observe(cfg.observation.build(), points)
    traj = drive(res, z, washout_len=cfg.washout_steps)
    pca = pca_project(traj.kept, cfg.pca_components)
    return {
        "mu": mu,
        "projections": pca.projections,
        "explained_variance": pca.explained_variance,
        "explained_ratio": pca.explained_ratio,
        "gap": closed_curve_gap(pca.projections),
    }


def _map(func, items: list) -> list:
    """``Pool.map`` when it pays off; pool workers themselves run inline."""
    if len(items) < 2 or multiprocessing.current_process().daemon:
        return [func(item) for item in items]
    workers = min(len(items), os.cpu_count() or 1)
    with multiprocessing.Pool(workers) as pool:
        return pool.map(func, items)


def run_vdp_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    if cfg.kind is not ExperimentKind.VDP_SWEEP:
        raise ValueError(f"{cfg.name} is a {cfg.kind.value} config")
    started = time.perf_counter()
    result = ExperimentResult(cfg.kind, cfg.name)
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    mus = sorted(cfg.mu_values)
    with _tracked_outputs(result) as written:
        branches = _map(_vdp_branch, [(cfg, mu) for mu in mus])
        frames = []
        for branch in branches:
            mu = branch["mu"]
            frame = tables.matrix_frame(
                branch["projections"],
                "pc",
                cfg.dt,
                cfg.washout_steps,
                first_index=1,
            )
            frame.insert(0, "mu", mu)
            frames.append(frame)
            result.explained_variance.extend(branch["explained_variance"])
            if mu == 0:
                result.flags.append(
                    "mu=0 has no limit cycle; the closed-curve statistic"
                    " is reported without a pass requirement"
                )
                result.add_metric(f"closed_gap_deg[mu={mu:g}]", branch["gap"])
            else:
                result.add_metric(
                    f"closed_gap_deg[mu={mu:g}]",
                    branch["gap"],
                    branch["gap"] < cfg.thresholds.closed_gap_deg,
                )
            result.add_metric(
                f"explained_ratio[mu={mu:g}]", branch["explained_ratio"]
            )
        combined = pd.concat(frames, ignore_index=True)
        written.append(
            tables.write_table(combined, run_dir / "loops.csv")
        )
        written.append(
            plots.overlay_curves(
                {
                    f"mu={b['mu']:g}": b["projections"][:, :2]
                    for b in branches
                },
                run_dir / "loops.svg",
                "Van der Pol reservoir loops, first two PCs",
            )
        )
        result.seconds = time.perf_counter() - started
        _write_summary(result, run_dir)
    return result


def _fit_readout(
    kind: ReadoutKind,
    cfg: ExperimentConfig,
    x: np.ndarray,
    y: np.ndarray,
) -> Readout:
    spec = cfg.readout
    n = x.shape[1]
    if kind is ReadoutKind.RIDGE:
        fm = (
            FeatureMap.linear(n)
            if spec.degree == 1
            else FeatureMap.polynomial(n, spec.degree)
        )
        return fit_ridge(x, y, fm, spec.lam)
    return fit_mlp(
        x,
        y,
        mlp_template(n, spec.hidden),
        spec.train_config(cfg.reservoir.seed),
        stream(cfg, TRAINING_STREAM),
    )


def run_forecast(cfg: ExperimentConfig) -> ExperimentResult:
    """Filter noisy observations and predict the next clean one."""
    if cfg.kind is not ExperimentKind.FORECAST:
        raise ValueError(f"{cfg.name} is a {cfg.kind.value} config")
    started = time.perf_counter()
    result = ExperimentResult(cfg.kind, cfg.name)
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    sys = cfg.dynamical_system()
    thresholds = cfg.thresholds
    with _tracked_outputs(result) as written:
        points = simulate(cfg)
        u = observe(cfg.observation.build(), points)
        z = add_noise(u, cfg.noise_variance, stream(cfg, NOISE_STREAM))
        res = build_reservoir(cfg.reservoir, sys.q)
        w0 = cfg.washout_steps
        traj = drive(res, z, washout_len=w0)

        # state x_t is paired with the clean observation at t + 1
        x = traj.states[w0:-1]
        y = u[w0 + 1 :]
        split = int(cfg.readout.train_fraction * len(x))
        if split < 1 or split >= len(x):
            raise ValueError("the train/test split leaves an empty side")
        x_train, y_train = x[:split], y[:split]
        x_test, y_test = x[split:], y[split:]
        noisy_now = z[w0:-1][split:]
        clean_now = u[w0:-1][split:]
        test_start = w0 + split

        persistence_nrmse = nrmse(noisy_now, y_test)
        noise_floor = mse(noisy_now, clean_now)
        result.add_metric("persistence_nrmse", persistence_nrmse)
        result.add_metric("persistence_mse", mse(noisy_now, y_test))
        result.add_metric("noise_floor_mse", noise_floor)
        result.add_metric("train_samples", split)
        result.add_metric("test_samples", len(x_test))

        predictions: Dict[str, np.ndarray] = {}
        for kind in cfg.readout.kinds:
            model = _fit_readout(kind, cfg, x_train, y_train)
            pred = predict_batch(model, x_test)
            predictions[kind.value] = pred
            err_nrmse = nrmse(pred, y_test)
            filter_mse = mse(pred, y_test)
            result.add_metric(
                f"{kind.value}_nrmse", err_nrmse, err_nrmse < thresholds.nrmse
            )
            result.add_metric(
                f"{kind.value}_baseline_gain",
                persistence_nrmse / err_nrmse,
                persistence_nrmse / err_nrmse >= thresholds.baseline_factor,
            )
            if cfg.noise_variance > 0:
                result.add_metric(
                    f"{kind.value}_filter_mse",
                    filter_mse,
                    filter_mse < thresholds.filter_mse,
                )
                result.add_metric(
                    f"{kind.value}_noise_reduction", noise_floor / filter_mse
                )
            else:
                result.add_metric(f"{kind.value}_filter_mse", filter_mse)
            written.append(
                persistence.save(model, run_dir / f"readout_{kind.value}")
            )
            if isinstance(model, MlpModel) and model.history is not None:
                written.append(
                    tables.write_table(
                        model.history.to_frame(), run_dir / "history.csv"
                    )
                )

        columns = {"input": noisy_now, "target": y_test}
        columns.update({f"pred_{k}": v for k, v in predictions.items()})
        written.append(
            tables.write_table(
                tables.series_frame(columns, cfg.dt, test_start),
                run_dir / "predictions.csv",
            )
        )
        written.append(persistence.save(res, run_dir / "reservoir"))

        window = min(len(y_test), int(round(FORECAST_WINDOW / cfg.dt)))
        t = tables.time_column(len(y_test), cfg.dt, test_start)[-window:]
        written.append(
            plots.forecast_overlay(
                t,
                y_test[-window:],
                {k: v[-window:] for k, v in predictions.items()},
                run_dir / "forecast.svg",
                "one-step-ahead forecast on the test segment",
                noisy=noisy_now[-window:],
            )
        )
        if sys.q == 3:
            first = next(iter(predictions.values()))
            later = points[test_start + 1 :]
            rebuilt = np.column_stack((first, later[:, 1], later[:, 2]))
            written.append(
                plots.scatter(
                    rebuilt,
                    run_dir / "reconstructed.svg",
                    "attractor rebuilt from the readout output",
                )
            )
        result.seconds = time.perf_counter() - started
        _write_summary(result, run_dir)
    logger.info("%s finished in %.2fs", cfg.name, result.seconds)
    return result


def write_report_bundle(
    reports: List[HypothesisReport], run_dir: Path
) -> List[Path]:
    run_dir.mkdir(parents=True, exist_ok=True)
    json_path = run_dir / "diagnostics.json"
    text_path = run_dir / "diagnostics.txt"
    json_path.write_text(
        json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    text_path.write_text(
        "".join(r.to_line() + "\n" for r in reports), encoding="utf-8"
    )
    return [json_path, text_path]


def run_diagnostics_suite(
    cfg: ExperimentConfig, res: Optional[ReservoirSystem] = None
) -> List[HypothesisReport]:
    """Hypothesis and conclusion checks on the configured reservoir, or on
    ``res`` when given."""
    spec = cfg.diagnostics
    sys = cfg.dynamical_system()
    if sys.name is SystemName.VANDERPOL and cfg.mu_values and not cfg.params:
        sys = cfg.dynamical_system({"mu": sorted(cfg.mu_values)[-1]})
    omega = cfg.observation.build()
    if res is None:
        res = build_reservoir(cfg.reservoir, sys.q)
    rng = stream(cfg, DIAGNOSTICS_STREAM)

    shape = check_embedding_dimension(res, sys.q, spec.periods)
    if not shape.passed:
        logger.warning("hypothesis compliance: %s", shape.details)
    reports = [shape, check_reachability(res)]

    points = orbit(sys, np.array(cfg.initial_condition), cfg.total_steps - 1)
    z = observe(omega, points)[: spec.esp_steps]
    reports.append(check_esp(res, z, spec.esp_trials, rng))

    attractor = points[cfg.washout_steps :]

    def sample(count: int) -> np.ndarray:
        count = min(count, len(attractor))
        idx = np.sort(rng.choice(len(attractor), size=count, replace=False))
        return attractor[idx]

    reports.append(
        check_immersion_rank(
            res, sys, omega, sample(spec.immersion_samples), spec.depth
        )
    )
    reports.append(
        check_injectivity(
            res, sys, omega, sample(spec.injectivity_samples), spec.depth
        )
    )
    write_report_bundle(reports, cfg.run_dir)
    return reports


RUNNERS: Final = {
    ExperimentKind.RECONSTRUCT: run_reconstruct,
    ExperimentKind.VDP_SWEEP: run_vdp_sweep,
    ExperimentKind.FORECAST: run_forecast,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)
