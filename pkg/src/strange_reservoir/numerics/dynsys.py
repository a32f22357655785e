"""Benchmark flows and their fixed-step time-h maps.

The discrete map ``phi`` is one classical RK4 step of size ``h``. Its inverse
starts from one RK4 step of size ``-h`` and is refined by Newton iterations
until it maps back onto the given point. All functions accept a single
phase point of shape ``(q,)`` or a batch of shape ``(k, q)``.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Final, List, Mapping, Optional

import numpy as np
from numpy.typing import NDArray

from strange_reservoir.numerics.linalg import DimensionError

PhasePoint = NDArray[np.float64]

DIVERGENCE_CAP: Final = 1e6
DEFAULT_STEP: Final = 0.01
INVERSE_REL_TOL: Final = 1e-13
INVERSE_MAX_ITER: Final = 8


class DivergenceError(ArithmeticError):
    """Raised when an integrated state leaves the divergence cap."""

    def __init__(self, step: int, point: Optional[PhasePoint] = None) -> None:
        super().__init__(
            f"integration diverged at step {step}"
            f" (|coordinate| > {DIVERGENCE_CAP:g})"
        )
        self.step = step
        self.point = point


class SystemName(str, Enum):
    ROSSLER = "rossler"
    VANDERPOL = "vanderpol"
    LORENZ = "lorenz"


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


SYSTEM_DIMENSIONS: Final = {
    SystemName.ROSSLER: 3,
    SystemName.VANDERPOL: 2,
    SystemName.LORENZ: 3,
}

DEFAULT_PARAMS: Final[Dict[SystemName, Dict[str, float]]] = {
    SystemName.ROSSLER: {},
    SystemName.VANDERPOL: {"mu": 1.0},
    SystemName.LORENZ: {},
}

# coarse sup-norm bounds of the attractors, used to pick GS truncation depths
ATTRACTOR_BOUNDS: Final = {
    SystemName.ROSSLER: 60.0,
    SystemName.VANDERPOL: 10.0,
    SystemName.LORENZ: 50.0,
}


def _rossler(x: NDArray, params: Mapping[str, float]) -> NDArray:
    u, v, w = x[..., 0], x[..., 1], x[..., 2]
    return np.stack((-v - w, u + v / 10.0, 0.1 + w * (u - 14.0)), axis=-1)


def _vanderpol(x: NDArray, params: Mapping[str, float]) -> NDArray:
    u, v = x[..., 0], x[..., 1]
    mu = params["mu"]
    return np.stack((v, mu * (1.0 - u * u) * v - u), axis=-1)


def _lorenz(x: NDArray, params: Mapping[str, float]) -> NDArray:
    u, v, w = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        (10.0 * (v - u), u * (28.0 - w) - v, u * v - 8.0 * w / 3.0), axis=-1
    )


_FIELDS: Final = {
    SystemName.ROSSLER: _rossler,
    SystemName.VANDERPOL: _vanderpol,
    SystemName.LORENZ: _lorenz,
}


def _rossler_jacobian(x: NDArray, params: Mapping[str, float]) -> NDArray:
    u, w = x[..., 0], x[..., 2]
    zero, one = np.zeros_like(u), np.ones_like(u)
    return np.stack(
        (
            np.stack((zero, -one, -one), axis=-1),
            np.stack((one, one / 10.0, zero), axis=-1),
            np.stack((w, zero, u - 14.0), axis=-1),
        ),
        axis=-2,
    )


def _vanderpol_jacobian(x: NDArray, params: Mapping[str, float]) -> NDArray:
    u, v = x[..., 0], x[..., 1]
    mu = params["mu"]
    return np.stack(
        (
            np.stack((np.zeros_like(u), np.ones_like(u)), axis=-1),
            np.stack((-2.0 * mu * u * v - 1.0, mu * (1.0 - u * u)), axis=-1),
        ),
        axis=-2,
    )


def _lorenz_jacobian(x: NDArray, params: Mapping[str, float]) -> NDArray:
    u, v, w = x[..., 0], x[..., 1], x[..., 2]
    ones = np.ones_like(u)
    return np.stack(
        (
            np.stack((-10.0 * ones, 10.0 * ones, 0.0 * ones), axis=-1),
            np.stack((28.0 - w, -ones, -u), axis=-1),
            np.stack((v, u, -8.0 / 3.0 * ones), axis=-1),
        ),
        axis=-2,
    )


_JACOBIANS: Final = {
    SystemName.ROSSLER: _rossler_jacobian,
    SystemName.VANDERPOL: _vanderpol_jacobian,
    SystemName.LORENZ: _lorenz_jacobian,
}


@dataclass(frozen=True)
class DynamicalSystem:
    """A named vector field together with the step of its time-h map."""

    name: SystemName
    params: Dict[str, float] = field(default_factory=dict)
    h: float = DEFAULT_STEP

    def __post_init__(self) -> None:
        object.__setattr__(self, "name", SystemName(self.name))
        merged = {**DEFAULT_PARAMS[self.name], **self.params}
        unknown = set(merged) - set(DEFAULT_PARAMS[self.name])
        if unknown:
            raise ValueError(
                f"unknown parameters for {self.name.value}: {sorted(unknown)}"
            )
        if not all(np.isfinite(list(merged.values()))):
            raise ValueError("system parameters must be finite")
        object.__setattr__(self, "params", merged)
        if not self.h > 0:
            raise ValueError("step h must be positive")

    @property
    def q(self) -> int:
        return SYSTEM_DIMENSIONS[self.name]

    @property
    def attractor_bound(self) -> float:
        return ATTRACTOR_BOUNDS[self.name]


def as_phase_points(sys: DynamicalSystem, p: NDArray) -> NDArray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (sys.q,) or p.ndim > 2:
        raise DimensionError(
            f"{sys.name.value} points have dimension {sys.q}, got {p.shape}"
        )
    return p


def vector_field(sys: DynamicalSystem, p: PhasePoint) -> NDArray:
    p = as_phase_points(sys, p)
    return _FIELDS[sys.name](p, sys.params)


def field_jacobian(sys: DynamicalSystem, p: PhasePoint) -> NDArray:
    """Jacobian of the vector field; shape ``(q, q)`` or ``(k, q, q)``."""
    p = as_phase_points(sys, p)
    return _JACOBIANS[sys.name](p, sys.params)


def _rk4(sys: DynamicalSystem, p: NDArray, h: float) -> NDArray:
    f = _FIELDS[sys.name]
    k1 = f(p, sys.params)
    k2 = f(p + 0.5 * h * k1, sys.params)
    k3 = f(p + 0.5 * h * k2, sys.params)
    k4 = f(p + h * k3, sys.params)
    return p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_inverse(sys: DynamicalSystem, m: NDArray) -> NDArray:
    """Solve ``_rk4(sys, p, h) == m`` for ``p``, row by row.

    The start is one step of size ``-h``. Newton updates use the cubic
    Taylor polynomial of ``exp(h J)`` as the slope, and a row keeps its
    last iterate once an update stops shrinking the residual.
    """
    h = sys.h
    target = m.reshape(-1, sys.q)
    eye = np.eye(sys.q)
    with np.errstate(all="ignore"):
        p = _rk4(sys, target, -h)
        residual = _rk4(sys, p, h) - target
        size = np.max(np.abs(residual), axis=1)
        tol = INVERSE_REL_TOL * np.maximum(
            1.0, np.max(np.abs(target), axis=1)
        )
        pending = size > tol
        for _ in range(INVERSE_MAX_ITER):
            if not np.any(pending):
                break
            rows = np.flatnonzero(pending)
            hj = h * _JACOBIANS[sys.name](p[rows], sys.params)
            hj2 = hj @ hj
            slope = eye + hj + hj2 / 2.0 + hj2 @ hj / 6.0
            try:
                delta = np.linalg.solve(slope, residual[rows][..., None])
            except np.linalg.LinAlgError:
                break
            candidate = p[rows] - delta[..., 0]
            new_residual = _rk4(sys, candidate, h) - target[rows]
            new_size = np.max(np.abs(new_residual), axis=1)
            improved = new_size < size[rows]
            kept = rows[improved]
            p[kept] = candidate[improved]
            residual[kept] = new_residual[improved]
            size[kept] = new_size[improved]
            pending[rows[~improved]] = False
            pending &= size > tol
    return p.reshape(m.shape)


def _diverged(p: NDArray) -> bool:
    return not np.all(np.abs(p) <= DIVERGENCE_CAP)


def flow_step(
    sys: DynamicalSystem,
    p: PhasePoint,
    direction: Direction = Direction.FORWARD,
    step_index: int = 1,
) -> NDArray:
    """One step of ``phi`` (forward) or of its inverse (backward)."""
    p = as_phase_points(sys, p)
    if Direction(direction) is Direction.FORWARD:
        nxt = _rk4(sys, p, sys.h)
    else:
        nxt = _rk4_inverse(sys, p)
    if _diverged(nxt):
        raise DivergenceError(step_index, nxt)
    return nxt


def orbit(
    sys: DynamicalSystem,
    p0: PhasePoint,
    n_steps: int,
    direction: Direction = Direction.FORWARD,
) -> NDArray:
    """Return ``[p0, phi(p0), ..., phi^n(p0)]`` stacked along axis 0."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    p = as_phase_points(sys, p0)
    out = np.empty((n_steps + 1,) + p.shape)
    out[0] = p
    for i in range(1, n_steps + 1):
        out[i] = flow_step(sys, out[i - 1], direction, step_index=i)
    return out


class ObservationKind(str, Enum):
    COORDINATE = "coordinate"
    LINEAR = "linear"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ObservationFn:
    """A scalar observation of phase points.

    ``linear`` with zero weights and an ``offset`` is a constant observation.
    ``custom`` wraps a vectorized callable mapping ``(..., q)`` to ``(...)``.
    """

    kind: ObservationKind
    index: int = 0
    weights: Optional[List[float]] = None
    offset: float = 0.0
    func: Optional[Callable[[NDArray], NDArray]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ObservationKind(self.kind))
        if self.kind is ObservationKind.COORDINATE and self.index < 0:
            raise ValueError("coordinate index must be non-negative")
        if self.kind is ObservationKind.LINEAR and self.weights is None:
            raise ValueError("linear observations need weights")
        if self.kind is ObservationKind.CUSTOM and self.func is None:
            raise ValueError("custom observations need a callable")

    @classmethod
    def coordinate(cls, index: int) -> "ObservationFn":
        return cls(ObservationKind.COORDINATE, index=index)

    @classmethod
    def linear(
        cls, weights: List[float], offset: float = 0.0
    ) -> "ObservationFn":
        return cls(
            ObservationKind.LINEAR,
            weights=[float(w) for w in weights],
            offset=offset,
        )

    @classmethod
    def constant(cls, value: float, q: int) -> "ObservationFn":
        return cls.linear([0.0] * q, offset=value)

    def validate_for(self, sys: DynamicalSystem) -> None:
        if self.kind is ObservationKind.COORDINATE and self.index >= sys.q:
            raise DimensionError(
                f"coordinate {self.index} out of range for dimension {sys.q}"
            )
        if self.kind is ObservationKind.LINEAR and len(self.weights) != sys.q:
            raise DimensionError(
                f"{len(self.weights)} weights for dimension {sys.q}"
            )

    def sup_bound(self, sys: DynamicalSystem) -> float:
        """Bound on |omega| over the attractor of ``sys``."""
        bound = sys.attractor_bound
        if self.kind is ObservationKind.LINEAR:
            return float(np.sum(np.abs(self.weights))) * bound + abs(
                self.offset
            )
        return bound


def observe(omega: ObservationFn, p: NDArray) -> NDArray:
    """Evaluate ``omega`` on one point (returns a 0-d value) or a batch."""
    p = np.asarray(p, dtype=float)
    if omega.kind is ObservationKind.COORDINATE:
        if omega.index >= p.shape[-1]:
            raise DimensionError(
                f"coordinate {omega.index} out of range for {p.shape}"
            )
        return p[..., omega.index]
    if omega.kind is ObservationKind.LINEAR:
        w = np.asarray(omega.weights, dtype=float)
        if w.shape != p.shape[-1:]:
            raise DimensionError(f"{w.shape[0]} weights for {p.shape}")
        return p @ w + omega.offset
    return np.asarray(omega.func(p), dtype=float)
