"""Linear reservoirs ``F(x, z) = A x + C z`` and their generalized
synchronizations.

The GS of a reservoir with rho(A) < 1 driven by observations of ``phi`` is
``f(m) = sum_j A^j C omega(phi^-j(m))``. Here it is evaluated by truncating
that series at a depth chosen from a geometric tail bound.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Final, List, Optional, Sequence

import numpy as np

from strange_reservoir.numerics.dynsys import (
    Direction,
    DivergenceError,
    DynamicalSystem,
    ObservationFn,
    PhasePoint,
    as_phase_points,
    flow_step,
    observe,
)
from strange_reservoir.numerics.linalg import (
    DenseMatrix,
    DenseVector,
    DimensionError,
    RngState,
    haar_orthogonal,
    operator_norm,
    spectral_radius,
)

logger = logging.getLogger(__name__)

RHO_MARGIN: Final = 1e-6
MAX_REDRAWS: Final = 100
MAX_TRUNCATION: Final = 10000
SERIES_TOL: Final = 1e-10
RHO_TOL: Final = 1e-12
STATE_CAP: Final = 1e12


class ReservoirConstructionError(RuntimeError):
    """Raised when no admissible reservoir was drawn within the re-draw cap."""


class TruncationError(ValueError):
    """Raised when the tail bound needs more terms than the cap allows."""


class SeriesDivergenceError(ArithmeticError):
    """Raised when the backward orbit diverges before the requested depth."""

    def __init__(self, depth: int, tail_bound: float) -> None:
        super().__init__(
            f"backward orbit diverged after {depth} terms; the partial sum"
            f" misses a tail bounded by {tail_bound:.3g}"
        )
        self.depth = depth
        self.tail_bound = tail_bound


class Recipe(str, Enum):
    UNIFORM_NORMALIZED = "uniform_normalized"
    HAAR_SCALED = "haar_scaled"
    TAKENS_SHIFT = "takens_shift"
    DIAGONAL = "diagonal"
    CUSTOM = "custom"


@dataclass
class ReservoirSystem:
    """The pair (A, C) with provenance and a cached spectral radius."""

    a: DenseMatrix
    c: DenseVector
    rho_hat: float
    seed: Optional[int] = None
    recipe: Recipe = Recipe.CUSTOM
    scale: Optional[float] = None

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.recipe = Recipe(self.recipe)
        n = self.c.shape[0] if self.c.ndim == 1 else -1
        if self.a.shape != (n, n) or n < 1:
            raise DimensionError(
                f"A of shape {self.a.shape} and C of shape {self.c.shape}"
            )
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.c))):
            raise ValueError("reservoir entries must be finite")

    @property
    def n(self) -> int:
        return self.c.shape[0]


def from_matrices(
    a: DenseMatrix, c: DenseVector, seed: Optional[int] = None
) -> ReservoirSystem:
    a = np.asarray(a, dtype=float)
    return ReservoirSystem(
        a=a,
        c=c,
        rho_hat=spectral_radius(a, RHO_TOL),
        seed=seed,
        recipe=Recipe.CUSTOM,
    )


def build_uniform(
    n: int, rng: RngState, seed: Optional[int] = None
) -> ReservoirSystem:
    """IID U[-0.5, 0.5] entries, A rescaled to unit spectral norm.

    A draw whose spectral radius sits within ``RHO_MARGIN`` of one is
    rejected and drawn again.
    """
    if n < 1:
        raise DimensionError("reservoir dimension must be at least 1")
    for attempt in range(1, MAX_REDRAWS + 1):
        a_raw = rng.uniform(-0.5, 0.5, size=(n, n))
        c = rng.uniform(-0.5, 0.5, size=n)
        norm = operator_norm(a_raw)
        if norm == 0.0:
            continue
        a = a_raw / norm
        rho = spectral_radius(a, RHO_TOL)
        if rho < 1.0 - RHO_MARGIN:
            return ReservoirSystem(
                a=a,
                c=c,
                rho_hat=rho,
                seed=seed,
                recipe=Recipe.UNIFORM_NORMALIZED,
            )
        logger.debug("re-drawing reservoir %d: rho=%.12f", attempt, rho)
    raise ReservoirConstructionError(
        f"no draw with spectral radius below {1.0 - RHO_MARGIN} in"
        f" {MAX_REDRAWS} attempts (N={n})"
    )


def build_haar(
    n: int, scale: float, rng: RngState, seed: Optional[int] = None
) -> ReservoirSystem:
    """A = scale * Haar-orthogonal, C uniform on [-1, 1]^N normalized."""
    if not 0.0 < scale < 1.0:
        raise ValueError(f"scale must lie in (0, 1), got {scale}")
    q = haar_orthogonal(n, rng)
    a = scale * q
    c_raw = rng.uniform(-1.0, 1.0, size=n)
    c = c_raw / np.linalg.norm(c_raw)
    # every eigenvalue of an orthogonal matrix has modulus one
    return ReservoirSystem(
        a=a,
        c=c,
        rho_hat=scale,
        seed=seed,
        recipe=Recipe.HAAR_SCALED,
        scale=scale,
    )


def build_diagonal(
    n: int, scale: float, rng: RngState, seed: Optional[int] = None
) -> ReservoirSystem:
    """Diagonal A with distinct entries of modulus at most ``scale`` and C
    with nonzero entries.

    Such systems satisfy the reachability condition but are not isomorphic
    to a delay map.
    """
    if not 0.0 < scale < 1.0:
        raise ValueError(f"scale must lie in (0, 1), got {scale}")
    if n < 1:
        raise DimensionError("reservoir dimension must be at least 1")
    diag = rng.uniform(-1.0, 1.0, size=n)
    diag *= scale / np.max(np.abs(diag))
    c = rng.uniform(0.5, 1.0, size=n) * rng.choice([-1.0, 1.0], size=n)
    return ReservoirSystem(
        a=np.diag(diag),
        c=c,
        rho_hat=float(np.max(np.abs(diag))),
        seed=seed,
        recipe=Recipe.DIAGONAL,
        scale=scale,
    )


def shift_matrix(n: int) -> DenseMatrix:
    return np.eye(n, k=-1)


def build_takens(q: int) -> ReservoirSystem:
    """The (2q+1)-delay map as a nilpotent linear reservoir."""
    if q < 1:
        raise ValueError("q must be at least 1")
    n = 2 * q + 1
    c = np.zeros(n)
    c[0] = 1.0
    return ReservoirSystem(
        a=shift_matrix(n), c=c, rho_hat=0.0, recipe=Recipe.TAKENS_SHIFT
    )


def conjugate(res: ReservoirSystem, p: DenseMatrix) -> ReservoirSystem:
    """The isomorphic system (P A P^-1, P C)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (res.n, res.n):
        raise DimensionError(f"P of shape {p.shape} for N={res.n}")
    a = p @ res.a @ np.linalg.inv(p)
    return ReservoirSystem(
        a=a,
        c=p @ res.c,
        rho_hat=res.rho_hat,
        seed=res.seed,
        recipe=Recipe.CUSTOM,
    )


@dataclass
class StateTrajectory:
    """Reservoir states driven by ``inputs``; ``states[t]`` is produced by
    ``inputs[t]``."""

    states: DenseMatrix
    inputs: DenseVector
    washout_len: int
    dt: float = 0.01
    x0: Optional[DenseVector] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.states.ndim != 2 or len(self.states) != len(self.inputs):
            raise DimensionError(
                f"{len(self.states)} states for {len(self.inputs)} inputs"
            )
        if not 0 <= self.washout_len < len(self.states):
            raise ValueError(
                f"washout {self.washout_len} must be shorter than"
                f" {len(self.states)} states"
            )

    @property
    def kept(self) -> DenseMatrix:
        """Post-washout states."""
        return self.states[self.washout_len :]

    @property
    def kept_inputs(self) -> DenseVector:
        return self.inputs[self.washout_len :]

    def recursion_residual(self, res: ReservoirSystem) -> float:
        """Largest relative violation of ``x_t = A x_(t-1) + C z_t``."""
        prev = self.states[:-1]
        predicted = prev @ res.a.T + np.outer(self.inputs[1:], res.c)
        gap = np.abs(predicted - self.states[1:])
        scale = np.maximum(np.abs(self.states[1:]), 1.0)
        return float(np.max(gap / scale)) if len(prev) else 0.0


def drive(
    res: ReservoirSystem,
    inputs: Sequence[float],
    x0: Optional[DenseVector] = None,
    washout_len: int = 0,
    dt: float = 0.01,
) -> StateTrajectory:
    """Iterate ``x_t = A x_(t-1) + C z_t`` from ``x_(-1) = x0``."""
    z = np.asarray(inputs, dtype=float)
    if z.ndim != 1:
        raise DimensionError("inputs must be a scalar series")
    if not washout_len < len(z):
        raise ValueError("washout must be shorter than the input series")
    x = np.zeros(res.n) if x0 is None else np.asarray(x0, dtype=float)
    if x.shape != (res.n,):
        raise DimensionError(f"x0 of shape {x.shape} for N={res.n}")
    start = x.copy()
    states = np.empty((len(z), res.n))
    a, c = res.a, res.c
    for t, zt in enumerate(z):
        x = a @ x + c * zt
        states[t] = x
    if not np.all(np.abs(states) <= STATE_CAP):
        bad = int(np.argmax(np.any(np.abs(states) > STATE_CAP, axis=1)))
        raise DivergenceError(bad)
    return StateTrajectory(
        states=states, inputs=z, washout_len=washout_len, dt=dt, x0=start
    )


def tail_bound(res: ReservoirSystem, sup_omega: float, depth: int) -> float:
    """Bound on the GS terms beyond ``depth`` from the geometric estimate."""
    if res.rho_hat == 0.0:
        return 0.0 if depth >= res.n else float("inf")
    c_norm = float(np.linalg.norm(res.c))
    return res.rho_hat**depth * c_norm * sup_omega / (1.0 - res.rho_hat)


def effective_truncation(
    res: ReservoirSystem, sup_omega: float, tol: float = SERIES_TOL
) -> int:
    """Smallest J with ``rho^J ||C|| sup|omega| / (1 - rho) < tol``."""
    if not res.rho_hat < 1.0:
        raise ValueError("the GS series needs rho(A) < 1")
    if res.rho_hat == 0.0:
        return res.n
    for depth in range(1, MAX_TRUNCATION + 1):
        if tail_bound(res, sup_omega, depth) < tol:
            return depth
    raise TruncationError(
        f"tail bound not below {tol:g} within {MAX_TRUNCATION} terms;"
        f" use a reservoir with smaller spectral radius than {res.rho_hat}"
    )


def default_depth(
    res: ReservoirSystem, sys: DynamicalSystem, omega: ObservationFn
) -> int:
    return effective_truncation(res, omega.sup_bound(sys))


def backward_observations(
    sys: DynamicalSystem,
    omega: ObservationFn,
    points: np.ndarray,
    depth: int,
) -> np.ndarray:
    """``omega(phi^-j(m))`` for ``j < depth``, shape ``(depth, k)``.

    Raises :class:`DivergenceError` with the index of the first backward
    step that left the divergence cap.
    """
    p = as_phase_points(sys, points)
    p = p.reshape(-1, sys.q)
    out = np.empty((depth, p.shape[0]))
    out[0] = observe(omega, p)
    for j in range(1, depth):
        p = flow_step(sys, p, Direction.BACKWARD, step_index=j)
        out[j] = observe(omega, p)
    return out


def _series_weights(res: ReservoirSystem, depth: int) -> DenseMatrix:
    """Columns ``A^j C`` for ``j < depth``, shape ``(N, depth)``."""
    weights = np.empty((res.n, depth))
    weights[:, 0] = res.c
    for j in range(1, depth):
        weights[:, j] = res.a @ weights[:, j - 1]
    return weights


def gs_series_batch(
    res: ReservoirSystem,
    sys: DynamicalSystem,
    omega: ObservationFn,
    points: np.ndarray,
    depth: Optional[int] = None,
) -> DenseMatrix:
    """Truncated GS at every row of ``points``; shape ``(k, N)``."""
    if not res.rho_hat < 1.0:
        raise ValueError("the GS series needs rho(A) < 1")
    omega.validate_for(sys)
    if depth is None:
        depth = default_depth(res, sys, omega)
    if depth < 1:
        raise ValueError("depth must be at least 1")
    try:
        obs = backward_observations(sys, omega, points, depth)
    except DivergenceError as e:
        raise SeriesDivergenceError(
            e.step, tail_bound(res, omega.sup_bound(sys), e.step)
        ) from e
    weights = _series_weights(res, depth)
    # accumulate term by term so nilpotent reservoirs reproduce delay
    # vectors exactly
    total = np.zeros((obs.shape[1], res.n))
    for j in range(depth):
        total += np.outer(obs[j], weights[:, j])
    return total


def gs_series(
    res: ReservoirSystem,
    sys: DynamicalSystem,
    omega: ObservationFn,
    m: PhasePoint,
    depth: Optional[int] = None,
) -> DenseVector:
    """``sum_{j<J} A^j C omega(phi^-j(m))``."""
    return gs_series_batch(res, sys, omega, np.asarray(m)[None, :], depth)[0]


def gs_jacobian(
    res: ReservoirSystem,
    sys: DynamicalSystem,
    omega: ObservationFn,
    m: PhasePoint,
    depth: Optional[int] = None,
    fd_eps: float = 1e-5,
) -> DenseMatrix:
    """N x q Jacobian of the truncated GS by central differences."""
    if fd_eps <= 0:
        raise ValueError("fd_eps must be positive")
    m = as_phase_points(sys, m)
    if depth is None:
        depth = default_depth(res, sys, omega)
    shifts = fd_eps * np.eye(sys.q)
    stencil = np.concatenate((m + shifts, m - shifts))
    values = gs_series_batch(res, sys, omega, stencil, depth)
    jac = (values[: sys.q] - values[sys.q :]).T / (2.0 * fd_eps)
    if not np.all(np.isfinite(jac)):
        raise ArithmeticError(
            f"non-finite Jacobian with fd_eps={fd_eps:g}; increase it"
        )
    return jac


def matrix_power_norm(a: DenseMatrix, k: int) -> float:
    """``||A^k||_2``."""
    return operator_norm(np.linalg.matrix_power(a, k))


def fixed_point_residual(
    res: ReservoirSystem,
    sys: DynamicalSystem,
    omega: ObservationFn,
    m: PhasePoint,
    depth: Optional[int] = None,
) -> float:
    """``||f(m) - A f(phi^-1(m)) - C omega(m)||`` for the truncated GS."""
    m = as_phase_points(sys, m)
    previous = flow_step(sys, m, Direction.BACKWARD)
    f_m = gs_series(res, sys, omega, m, depth)
    f_prev = gs_series(res, sys, omega, previous, depth)
    z = float(observe(omega, m))
    return float(np.linalg.norm(f_m - res.a @ f_prev - res.c * z))


def echo_gap_bounds(res: ReservoirSystem, steps: int) -> List[float]:
    """``||A^(t+1)||`` for ``t < steps``, the contraction of initial-state
    gaps."""
    bounds = []
    power = np.eye(res.n)
    for _ in range(steps):
        power = res.a @ power
        bounds.append(operator_norm(power))
    return bounds
