"""Readouts ``h`` from reservoir states to scalar targets.

Two families are provided: ridge regression on polynomial features, solved in
closed form, and a small fully connected network with scaled logistic hidden
units trained by staged Adam with early stopping.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Final,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd
import scipy.linalg
from numpy.typing import NDArray
from scipy.special import expit
from sklearn.preprocessing import PolynomialFeatures

from strange_reservoir.numerics.linalg import (
    DenseMatrix,
    DenseVector,
    DimensionError,
    RngState,
)

logger = logging.getLogger(__name__)

DESK_HIDDEN: Final = (20, 20, 20)
# desk schedule: two minibatch Adam stages
DESK_LEARNING_RATES: Final = (5e-3, 1e-3)
DESK_EPOCHS: Final = 80
DESK_PATIENCE: Final = 10
DESK_BATCH_SIZE: Final = 2000
PAPER_HIDDEN: Final = (20,) * 10
PAPER_LEARNING_RATES: Final = (
    5e-3,
    3e-3,
    1e-3,
    9e-4,
    7e-4,
    5e-4,
    5e-5,
    3e-5,
)
VALIDATION_FRACTION: Final = 0.1
ACTIVATION_MARGIN: Final = 0.1
# rows of the polynomial feature matrix materialized at once
CHUNK_ROWS: Final = 20000


class SingularSystemError(ValueError):
    """Raised when the normal equations cannot be solved."""


class TrainingDivergedError(ArithmeticError):
    """Raised when the training loss stops being finite."""

    def __init__(self, stage: int, epoch: int) -> None:
        super().__init__(
            f"training loss is not finite at stage {stage}, epoch {epoch};"
            " lower the learning rate"
        )
        self.stage = stage
        self.epoch = epoch


class FeatureKind(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class FeatureMap:
    """Monomials of the state up to ``degree``, bias column first."""

    kind: FeatureKind
    input_dim: int
    degree: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        if self.input_dim < 1:
            raise DimensionError("feature input dimension must be positive")
        if self.degree < 1:
            raise ValueError("degree must be at least 1")
        if self.kind is FeatureKind.LINEAR and self.degree != 1:
            raise ValueError("linear feature maps have degree 1")

    @classmethod
    def linear(cls, input_dim: int) -> "FeatureMap":
        return cls(FeatureKind.LINEAR, input_dim)

    @classmethod
    def polynomial(cls, input_dim: int, degree: int) -> "FeatureMap":
        return cls(FeatureKind.POLYNOMIAL, input_dim, degree)

    @property
    def output_dim(self) -> int:
        return math.comb(self.input_dim + self.degree, self.degree)

    def transform(self, states: NDArray) -> DenseMatrix:
        x = _as_rows(states, self.input_dim)
        poly = PolynomialFeatures(degree=self.degree, include_bias=True)
        poly.fit(np.zeros((1, self.input_dim)))
        return poly.transform(x)


def _as_rows(states: NDArray, dim: int) -> DenseMatrix:
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(
            f"states of shape {x.shape} for a readout of input dimension {dim}"
        )
    return x


def _chunks(count: int, size: int = CHUNK_ROWS) -> Iterator[slice]:
    for start in range(0, count, size):
        yield slice(start, min(start + size, count))


def _as_targets(targets: Sequence[float], count: int) -> DenseVector:
    y = np.asarray(targets, dtype=float)
    if y.shape != (count,):
        raise DimensionError(f"{y.shape} targets for {count} states")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    return y


def mse(predicted: NDArray, truth: NDArray) -> float:
    diff = np.asarray(predicted, dtype=float) - np.asarray(truth, dtype=float)
    return float(np.mean(diff**2))


def nrmse(predicted: NDArray, truth: NDArray) -> float:
    """Root-mean-square error divided by the standard deviation of
    ``truth``."""
    spread = float(np.std(truth))
    if spread == 0.0:
        raise ValueError("NRMSE is undefined for a constant target")
    return math.sqrt(mse(predicted, truth)) / spread


@dataclass
class RidgeModel:
    feature_map: FeatureMap
    weights: DenseVector
    lam: float = 0.0
    train_mse: float = 0.0

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.feature_map.output_dim,):
            raise DimensionError(
                f"{self.weights.shape} weights for"
                f" {self.feature_map.output_dim} features"
            )
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("ridge weights must be finite")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def input_dim(self) -> int:
        return self.feature_map.input_dim


def fit_ridge(
    states: NDArray,
    targets: Sequence[float],
    fm: FeatureMap,
    lam: float,
) -> RidgeModel:
    """Solve ``(Phi^T Phi + lam I) w = Phi^T y``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    x = _as_rows(states, fm.input_dim)
    y = _as_targets(targets, x.shape[0])
    if x.shape[0] < fm.output_dim:
        raise DimensionError(
            f"{x.shape[0]} samples for {fm.output_dim} features"
        )
    gram = lam * np.eye(fm.output_dim)
    rhs = np.zeros(fm.output_dim)
    for rows in _chunks(x.shape[0]):
        phi = fm.transform(x[rows])
        gram += phi.T @ phi
        rhs += phi.T @ y[rows]
    try:
        with warnings.catch_warnings():
            if lam == 0:
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            w = scipy.linalg.solve(gram, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
        raise SingularSystemError(
            f"normal equations are singular at lambda={lam:g};"
            " use lambda > 0"
        ) from e
    model = RidgeModel(feature_map=fm, weights=w, lam=lam)
    model.train_mse = mse(predict_batch(model, x), y)
    return model


def ridge_gradient(
    model: RidgeModel, states: NDArray, targets: Sequence[float]
) -> DenseVector:
    """Gradient of ``||Phi w - y||^2 / 2 + lam ||w||^2 / 2`` at the fitted
    weights."""
    phi = model.feature_map.transform(states)
    y = _as_targets(targets, phi.shape[0])
    return phi.T @ (phi @ model.weights - y) + model.lam * model.weights


@dataclass
class TrainingHistory:
    epoch: List[int] = field(default_factory=list)
    stage: List[int] = field(default_factory=list)
    train_mse: List[float] = field(default_factory=list)
    val_mse: List[float] = field(default_factory=list)

    def record(self, stage: int, epoch: int, train: float, val: float) -> None:
        self.stage.append(stage)
        self.epoch.append(epoch)
        self.train_mse.append(train)
        self.val_mse.append(val)

    def __len__(self) -> int:
        return len(self.epoch)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": self.epoch,
                "stage": self.stage,
                "train_mse": self.train_mse,
                "val_mse": self.val_mse,
            }
        )


@dataclass
class MlpModel:
    """Fully connected network; ``weights[i]`` has shape ``(in, out)``.

    Hidden units apply ``(z_max - z_min) * logistic(s) + z_min``; the output
    layer is affine.
    """

    layer_sizes: List[int]
    weights: List[DenseMatrix]
    biases: List[DenseVector]
    z_min: float = -1.0
    z_max: float = 1.0
    history: Optional[TrainingHistory] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        sizes = self.layer_sizes
        if len(sizes) < 2 or sizes[-1] != 1 or min(sizes) < 1:
            raise DimensionError(
                f"layer sizes {sizes} must run from the input to one output"
            )
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(
            self.weights
        ):
            raise DimensionError("one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (
                sizes[i + 1],
            ):
                raise DimensionError(
                    f"layer {i} has weights {w.shape} and bias {b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} parameters are not finite")
        if not self.z_max >= self.z_min:
            raise ValueError("z_max must not be below z_min")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def hidden(self) -> List[int]:
        return self.layer_sizes[1:-1]

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            z_min=self.z_min,
            z_max=self.z_max,
        )


def init_mlp(
    input_dim: int,
    hidden: Sequence[int],
    rng: RngState,
    z_min: float = -1.0,
    z_max: float = 1.0,
) -> MlpModel:
    """Glorot-uniform weights and zero biases."""
    sizes = [input_dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, z_min=z_min, z_max=z_max)


def _forward(model: MlpModel, x: DenseMatrix) -> List[DenseMatrix]:
    """Pre-activations of every layer; the last one is the output."""
    span = model.z_max - model.z_min
    pre = []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        s = a @ w + b
        pre.append(s)
        if i < last:
            a = span * expit(s) + model.z_min
    return pre


def _loss_and_grads(model: MlpModel, x: DenseMatrix, y: DenseVector):
    pre = _forward(model, x)
    span = model.z_max - model.z_min
    out = pre[-1][:, 0]
    loss = float(np.mean((out - y) ** 2))
    delta = (2.0 / len(y)) * (out - y)[:, None]
    grads_w: List[DenseMatrix] = [np.empty(0)] * len(model.weights)
    grads_b: List[DenseVector] = [np.empty(0)] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        if i == 0:
            a_in = x
        else:
            a_in = span * expit(pre[i - 1]) + model.z_min
        grads_w[i] = a_in.T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            sig = expit(pre[i - 1])
            delta = (delta @ model.weights[i].T) * (span * sig * (1.0 - sig))
    return loss, grads_w, grads_b


def mlp_loss(model: MlpModel, states: NDArray, targets: NDArray) -> float:
    x = _as_rows(states, model.input_dim)
    y = _as_targets(targets, x.shape[0])
    return mse(_forward(model, x)[-1][:, 0], y)


def mlp_gradients(model: MlpModel, states: NDArray, targets: NDArray):
    """Backpropagated gradients of the mean squared error, per layer."""
    x = _as_rows(states, model.input_dim)
    y = _as_targets(targets, x.shape[0])
    _, grads_w, grads_b = _loss_and_grads(model, x, y)
    return grads_w, grads_b


def gradient_check(
    model: MlpModel, states: NDArray, targets: NDArray, eps: float = 1e-6
) -> List[float]:
    """Per-layer ``||g - g_fd|| / (||g|| + ||g_fd||)`` of backprop against
    central differences; zero when both gradients vanish."""
    x = _as_rows(states, model.input_dim)
    y = _as_targets(targets, x.shape[0])
    grads_w, grads_b = mlp_gradients(model, x, y)
    shifted = model.copy()
    errors = []
    for layer in range(len(model.weights)):
        analytic = np.concatenate(
            (grads_w[layer].ravel(), grads_b[layer].ravel())
        )
        numeric = np.empty_like(analytic)
        params = (shifted.weights[layer], shifted.biases[layer])
        k = 0
        for p in params:
            flat = p.reshape(-1)
            for j in range(flat.size):
                saved = flat[j]
                flat[j] = saved + eps
                up = mlp_loss(shifted, x, y)
                flat[j] = saved - eps
                down = mlp_loss(shifted, x, y)
                flat[j] = saved
                numeric[k] = (up - down) / (2.0 * eps)
                k += 1
        denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
        gap = float(np.linalg.norm(analytic - numeric))
        errors.append(gap / denom if denom > 0 else 0.0)
    return errors


@dataclass
class TrainConfig:
    """Staged Adam: one stage per learning rate, each restarting from the
    best weights so far."""

    learning_rates: List[float] = field(default_factory=lambda: [1e-3])
    epochs: int = 500
    batch_size: Optional[int] = None
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = VALIDATION_FRACTION
    seed: int = 0

    def __post_init__(self) -> None:
        rates = [float(r) for r in self.learning_rates]
        if not rates or min(rates) <= 0:
            raise ValueError("learning rates must be positive")
        if any(b > a for a, b in zip(rates, rates[1:])):
            raise ValueError("learning rates must not increase across stages")
        self.learning_rates = rates
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam constants")

    @classmethod
    def desk(cls, seed: int = 0) -> "TrainConfig":
        return cls(
            learning_rates=list(DESK_LEARNING_RATES),
            epochs=DESK_EPOCHS,
            batch_size=DESK_BATCH_SIZE,
            patience=DESK_PATIENCE,
            seed=seed,
        )

    @classmethod
    def paper(cls, seed: int = 0) -> "TrainConfig":
        return cls(
            learning_rates=list(PAPER_LEARNING_RATES),
            epochs=7000,
            patience=500,
            seed=seed,
        )


class _Adam:
    def __init__(self, shapes, lr: float, cfg: TrainConfig) -> None:
        self.lr = lr
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: List[NDArray], grads: List[NDArray]) -> None:
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1**self.t)
            v_hat = self.v[i] / (1.0 - b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.cfg.eps)


def activation_bounds(targets: NDArray) -> Tuple[float, float]:
    """Target range widened by a 10% margin on each side."""
    lo, hi = float(np.min(targets)), float(np.max(targets))
    span = hi - lo if hi > lo else 1.0
    return lo - ACTIVATION_MARGIN * span, hi + ACTIVATION_MARGIN * span


def fit_mlp(
    states: NDArray,
    targets: Sequence[float],
    arch: MlpModel,
    cfg: TrainConfig,
    rng: Optional[RngState] = None,
) -> MlpModel:
    """Train a network shaped like ``arch`` on the mean squared error.

    The tail ``cfg.val_fraction`` of the series is held out for early
    stopping. Training starts from fresh Glorot weights with a zero output
    layer whose bias is the mean target, so constant targets are fitted
    exactly from the first epoch.
    """
    x = _as_rows(states, arch.input_dim)
    y = _as_targets(targets, x.shape[0])
    n_val = max(1, int(round(cfg.val_fraction * len(y))))
    n_train = len(y) - n_val
    if n_train < 1:
        raise ValueError(f"{len(y)} samples leave nothing to train on")
    # a batch larger than the training rows is one full batch
    batch = min(n_train, cfg.batch_size or n_train)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    x_train, y_train = x[:n_train], y[:n_train]
    x_val, y_val = x[n_train:], y[n_train:]

    z_min, z_max = activation_bounds(y_train)
    model = init_mlp(arch.input_dim, arch.hidden, rng, z_min, z_max)
    model.weights[-1][:] = 0.0
    model.biases[-1][:] = float(np.mean(y_train))

    history = TrainingHistory()
    best = model.copy()
    best_val = mlp_loss(model, x_val, y_val)
    shapes = [p.shape for p in (*model.weights, *model.biases)]
    for stage, lr in enumerate(cfg.learning_rates):
        model = best.copy()
        adam = _Adam(shapes, lr, cfg)
        stale = 0
        for epoch in range(1, cfg.epochs + 1):
            order = (
                np.arange(n_train)
                if batch == n_train
                else rng.permutation(n_train)
            )
            train_loss = 0.0
            for start in range(0, n_train, batch):
                idx = order[start : start + batch]
                loss, gw, gb = _loss_and_grads(
                    model, x_train[idx], y_train[idx]
                )
                if not math.isfinite(loss):
                    raise TrainingDivergedError(stage, epoch)
                adam.step([*model.weights, *model.biases], [*gw, *gb])
                train_loss += loss * len(idx)
            train_loss /= n_train
            val_loss = mlp_loss(model, x_val, y_val)
            if not (math.isfinite(val_loss) and math.isfinite(train_loss)):
                raise TrainingDivergedError(stage, epoch)
            history.record(stage, epoch, train_loss, val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best = model.copy()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.debug(
                        "stage %d (lr=%g) stopped early at epoch %d",
                        stage,
                        lr,
                        epoch,
                    )
                    break
        logger.info(
            "stage %d (lr=%g): best validation MSE %.3e", stage, lr, best_val
        )
    best.history = history
    return best


def mlp_template(
    input_dim: int, hidden: Sequence[int] = DESK_HIDDEN
) -> MlpModel:
    """An untrained architecture to hand to :func:`fit_mlp`."""
    return init_mlp(input_dim, hidden, np.random.default_rng(0))


Readout = Union[RidgeModel, MlpModel]


def predict_batch(model: Readout, states: NDArray) -> DenseVector:
    if isinstance(model, RidgeModel):
        x = _as_rows(states, model.input_dim)
        out = np.empty(x.shape[0])
        for rows in _chunks(x.shape[0]):
            out[rows] = model.feature_map.transform(x[rows]) @ model.weights
        return out
    x = _as_rows(states, model.input_dim)
    return _forward(model, x)[-1][:, 0]


def predict(model: Readout, state: DenseVector) -> float:
    state = np.asarray(state, dtype=float)
    if state.ndim != 1:
        raise DimensionError("predict takes a single state vector")
    return float(predict_batch(model, state)[0])


def add_noise(
    series: Sequence[float], variance: float, rng: RngState
) -> DenseVector:
    """``series`` plus IID centred Gaussian noise of the given variance."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    z = np.array(series, dtype=float)
    if variance == 0:
        return z
    return z + rng.normal(0.0, math.sqrt(variance), size=z.shape)
