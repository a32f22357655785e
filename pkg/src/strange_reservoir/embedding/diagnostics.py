"""Runtime checks of the embedding hypotheses and their conclusions.

Every check returns a :class:`HypothesisReport`. Monte Carlo checks draw from
an explicit generator and merge per-draw results in draw order, so reports
are reproducible from (seed, arguments).
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Final, List, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from strange_reservoir.embedding.reservoir import (
    ReservoirSystem,
    build_uniform,
    drive,
    gs_jacobian,
    gs_series_batch,
    matrix_power_norm,
)
from strange_reservoir.numerics.dynsys import DynamicalSystem, ObservationFn
from strange_reservoir.numerics.linalg import (
    RANK_TOL,
    DenseMatrix,
    RngState,
    krylov_matrix,
    numerical_rank,
    pivot_ratios,
    realify,
    whiten,
)

logger = logging.getLogger(__name__)

ESP_REL_TOL: Final = 1e-10
ESP_BOUND_FACTOR: Final = 10.0
ESP_ROUNDING_FACTOR: Final = 1e4
MIN_INJECTIVITY_SAMPLES: Final = 100

Number = Union[float, complex]


class HypothesisViolatedError(ValueError):
    """Raised when the preconditions of a hypothesis check do not hold."""


class PolynomialSpecError(ValueError):
    """Raised for malformed polynomial families."""


@dataclass
class HypothesisReport:
    """Outcome of one check. Serializes to a text line and to JSON."""

    check: str
    passed: bool
    statistic: float
    tolerance: float
    samples: int
    details: str = ""

    def __post_init__(self) -> None:
        self.passed = bool(self.passed)
        self.statistic = float(self.statistic)
        if not math.isfinite(self.statistic):
            raise ValueError(f"{self.check}: statistic must be finite")

    def to_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = (
            f"{status} {self.check}: statistic={self.statistic!r}"
            f" tolerance={self.tolerance!r} samples={self.samples}"
        )
        return f"{line} ({self.details})" if self.details else line

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "HypothesisReport":
        return cls(**data)


def check_reachability(
    res: ReservoirSystem, tol: float = RANK_TOL
) -> HypothesisReport:
    """Linear independence of ``C, AC, ..., A^(N-1) C``."""
    k = krylov_matrix(res.a, res.c)
    ratios = pivot_ratios(k)
    rank = int(np.count_nonzero(ratios > tol))
    return HypothesisReport(
        check="reachability",
        passed=rank == res.n,
        statistic=float(ratios.min()),
        tolerance=tol,
        samples=1,
        details=f"rank {rank} of {res.n}",
    )


def periodic_orbit_family(
    a: DenseMatrix,
    c: np.ndarray,
    eigenvalues: Sequence[Number],
    n: int,
) -> np.ndarray:
    """Columns ``(I - l_j A^n)^-1 (I - A)^-1 (I - A^n) C``.

    Uses direct solves; the result is complex when any ``l_j`` is.
    """
    size = a.shape[0]
    eye = np.eye(size)
    a_n = np.linalg.matrix_power(a, n)
    base = np.linalg.solve(eye - a, (eye - a_n) @ c)
    is_complex = any(np.iscomplexobj(lam) for lam in eigenvalues)
    dtype = complex if is_complex else float
    columns = [
        np.linalg.solve(eye - lam * a_n.astype(dtype), base.astype(dtype))
        for lam in eigenvalues
    ]
    return np.stack(columns, axis=1)


def check_periodic_independence(
    res: ReservoirSystem,
    eigenvalues: Sequence[Number],
    n: int,
    tol: float = RANK_TOL,
) -> HypothesisReport:
    """Linear independence of the periodic-orbit vectors for one spectrum."""
    if n < 1:
        raise ValueError("period n must be at least 1")
    if not eigenvalues:
        raise ValueError("at least one eigenvalue is required")
    worst = max(abs(lam) for lam in eigenvalues) * res.rho_hat**n
    if not worst < 1.0:
        raise HypothesisViolatedError(
            f"|lambda| rho^n = {worst:.6g} >= 1: the Neumann series of"
            " (I - lambda A^n)^-1 does not converge"
        )
    family = periodic_orbit_family(res.a, res.c, eigenvalues, n)
    q = len(eigenvalues)
    if np.iscomplexobj(family):
        ratios = pivot_ratios(realify(family))
        rank = int(np.count_nonzero(ratios > tol)) // 2
    else:
        ratios = pivot_ratios(family)
        rank = int(np.count_nonzero(ratios > tol))
    details = f"rank {rank} of {q}"
    if res.rho_hat == 0.0 and n >= res.n:
        details += "; nilpotent A with A^n = 0: all vectors coincide"
    return HypothesisReport(
        check="periodic_independence",
        passed=rank == q,
        statistic=float(ratios.min()),
        tolerance=tol,
        samples=1,
        details=details,
    )


def check_esp(
    res: ReservoirSystem,
    inputs: Sequence[float],
    trials: int,
    rng: RngState,
    rel_tol: float = ESP_REL_TOL,
) -> HypothesisReport:
    """Drive ``trials`` random initial states with the same inputs and
    measure how far apart they end up."""
    if trials < 2:
        raise ValueError("need at least two trials")
    z = np.asarray(inputs, dtype=float)
    starts = rng.standard_normal((trials, res.n))
    finals = np.stack([drive(res, z, x0=x0).states[-1] for x0 in starts])
    spread = float(np.max(pdist(starts)))
    statistic = float(np.max(pdist(finals)))
    # identical drives still differ by rounding once A^T is negligible
    rounding = (
        ESP_ROUNDING_FACTOR
        * np.finfo(float).eps
        * max(1.0, float(np.max(np.abs(finals))))
    )
    bound = (
        ESP_BOUND_FACTOR * matrix_power_norm(res.a, len(z)) * spread
        + rounding
    )
    within_bound = statistic <= bound
    tolerance = min(bound, rel_tol * spread)
    passed = statistic <= tolerance
    details = f"initial spread {spread:.6g}, contraction bound {bound:.6g}"
    if not within_bound:
        details += "; spread exceeds the contraction bound"
    return HypothesisReport(
        check="echo_state_property",
        passed=passed,
        statistic=statistic,
        tolerance=tolerance,
        samples=trials,
        details=details,
    )


def check_immersion_rank(
    res: ReservoirSystem,
    sys: DynamicalSystem,
    omega: ObservationFn,
    samples: np.ndarray,
    depth: Optional[int] = None,
    fd_eps: float = 1e-5,
    tol: float = 1e-8,
) -> HypothesisReport:
    """Rank q of the GS Jacobian at every sample point."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    min_ratio = math.inf
    deficient = 0
    for m in samples:
        jac = gs_jacobian(res, sys, omega, m, depth, fd_eps)
        ratios = pivot_ratios(jac)
        rank = int(np.count_nonzero(ratios > tol))
        ratio = float(ratios[sys.q - 1]) if len(ratios) >= sys.q else 0.0
        min_ratio = min(min_ratio, ratio)
        if rank < sys.q:
            deficient += 1
    details = f"{deficient} rank-deficient samples"
    if res.n < 2 * sys.q:
        details += (
            f"; hypothesis warning: N={res.n} < 2q={2 * sys.q},"
            " the immersion theorem does not apply"
        )
        logger.warning("immersion check with N=%d < 2q=%d", res.n, 2 * sys.q)
    return HypothesisReport(
        check="immersion_rank",
        passed=deficient == 0,
        statistic=min_ratio if math.isfinite(min_ratio) else 0.0,
        tolerance=tol,
        samples=len(samples),
        details=details,
    )


def check_injectivity(
    res: ReservoirSystem,
    sys: DynamicalSystem,
    omega: ObservationFn,
    samples: np.ndarray,
    depth: Optional[int] = None,
    near_tol: float = 1e-3,
    far_factor: float = 0.05,
) -> HypothesisReport:
    """False-neighbour test: points close in the embedding must be close in
    phase space.

    Embedded distances are measured in whitened principal coordinates of
    the embedded samples, which an invertible linear change of reservoir
    coordinates leaves unchanged up to rotation.
    """
    phase = np.asarray(samples, dtype=float)
    if len(phase) < MIN_INJECTIVITY_SAMPLES:
        raise ValueError(
            f"need at least {MIN_INJECTIVITY_SAMPLES} samples,"
            f" got {len(phase)}"
        )
    embedded = whiten(gs_series_batch(res, sys, omega, phase, depth))
    collapsed = embedded.shape[1] == 0
    embedded_diameter = 0.0 if collapsed else float(np.max(pdist(embedded)))
    phase_diameter = float(np.max(pdist(phase)))
    floor = np.finfo(float).eps * max(1.0, embedded_diameter)
    radius = near_tol * embedded_diameter
    if collapsed:
        i, j = np.triu_indices(len(phase), k=1)
        pairs = np.stack((i, j), axis=1)
    else:
        pairs = cKDTree(embedded).query_pairs(radius, output_type="ndarray")
    worst = 0.0
    violations = 0
    if len(pairs):
        e_dist = np.linalg.norm(
            embedded[pairs[:, 0]] - embedded[pairs[:, 1]], axis=1
        )
        p_dist = np.linalg.norm(
            phase[pairs[:, 0]] - phase[pairs[:, 1]], axis=1
        )
        worst = float(np.max(p_dist / np.maximum(e_dist, floor)))
        far = p_dist >= far_factor * phase_diameter
        violations = int(np.count_nonzero(far))
    details = f"{len(pairs)} near pairs, {violations} false neighbours"
    if collapsed:
        details += "; embedding collapsed to a point"
    return HypothesisReport(
        check="injectivity",
        passed=violations == 0,
        statistic=worst,
        tolerance=far_factor,
        samples=len(phase),
        details=details,
    )


def _polynomial_matrix(
    polynomials: Sequence[Sequence[float]], n: int
) -> np.ndarray:
    """Coefficient matrix (ascending powers) of shape ``(n, count)``."""
    if not polynomials:
        raise PolynomialSpecError("empty polynomial family")
    if len(polynomials) > n:
        raise PolynomialSpecError(
            f"{len(polynomials)} polynomials exceed dimension {n}"
        )
    coefficients = np.zeros((n, len(polynomials)))
    for j, poly in enumerate(polynomials):
        poly = np.asarray(poly, dtype=float)
        if poly.ndim != 1 or len(poly) == 0 or not np.all(np.isfinite(poly)):
            raise PolynomialSpecError(f"malformed polynomial {j}: {poly!r}")
        nonzero = np.flatnonzero(poly)
        if len(nonzero) and nonzero[-1] > n - 1:
            raise PolynomialSpecError(
                f"polynomial {j} has degree {nonzero[-1]} > {n - 1}"
            )
        coefficients[: min(len(poly), n), j] = poly[:n]
    return coefficients


def monomials(n: int) -> List[List[float]]:
    """``1, x, ..., x^(n-1)`` as coefficient lists."""
    return [[0.0] * j + [1.0] for j in range(n)]


def monte_carlo_polynomial_independence(
    n: int,
    polynomials: Sequence[Sequence[float]],
    draws: int,
    rng: RngState,
    tol: float = RANK_TOL,
) -> HypothesisReport:
    """Full rank of ``[p_1(A) C | ... | p_k(A) C]`` over random draws.

    ``p(A) C`` is the Krylov matrix applied to the coefficient vector of
    ``p``.
    """
    coefficients = _polynomial_matrix(polynomials, n)
    count = coefficients.shape[1]
    independent = numerical_rank(coefficients, tol) == count
    full_rank = 0
    min_ratio = math.inf
    for _ in range(draws):
        a = rng.uniform(-0.5, 0.5, size=(n, n))
        c = rng.uniform(-0.5, 0.5, size=n)
        columns = krylov_matrix(a, c) @ coefficients
        ratios = pivot_ratios(columns)
        min_ratio = min(min_ratio, float(ratios.min()))
        if np.count_nonzero(ratios > tol) == count:
            full_rank += 1
    details = f"{full_rank}/{draws} full-rank draws"
    if not independent:
        details += "; polynomial family is linearly dependent"
    return HypothesisReport(
        check="polynomial_independence",
        passed=full_rank == draws,
        statistic=min_ratio if math.isfinite(min_ratio) else 0.0,
        tolerance=tol,
        samples=draws,
        details=details,
    )


def monte_carlo_spectrum_avoidance(
    n: int,
    points: Sequence[Number],
    draws: int,
    rng: RngState,
    tol: float = RANK_TOL,
) -> HypothesisReport:
    """No given point is an eigenvalue of a random A.

    Measured by the smallest singular value of ``lambda I - A``, relative to
    ``||A||``.
    """
    if not points:
        raise ValueError("at least one point is required")
    avoided = 0
    smallest = math.inf
    eye = np.eye(n)
    for _ in range(draws):
        a = rng.uniform(-0.5, 0.5, size=(n, n))
        scale = max(np.linalg.norm(a, 2), 1.0)
        gaps = [
            np.linalg.svd(lam * eye - a, compute_uv=False)[-1] / scale
            for lam in points
        ]
        smallest = min(smallest, float(min(gaps)))
        if min(gaps) > tol:
            avoided += 1
    return HypothesisReport(
        check="spectrum_avoidance",
        passed=avoided == draws,
        statistic=smallest,
        tolerance=tol,
        samples=draws,
        details=f"{avoided}/{draws} draws avoid {len(points)} points",
    )


def monte_carlo_reachability(
    n: int, draws: int, rng: RngState, tol: float = RANK_TOL
) -> HypothesisReport:
    """Reachability over uniform-normalized reservoir draws."""
    reports = [
        check_reachability(build_uniform(n, rng), tol) for _ in range(draws)
    ]
    return _merge("reachability_monte_carlo", reports, tol)


def monte_carlo_periodic_independence(
    n: int,
    eigenvalues: Sequence[Number],
    period: int,
    draws: int,
    rng: RngState,
    tol: float = RANK_TOL,
) -> HypothesisReport:
    """Periodic-orbit independence over uniform-normalized reservoir draws."""
    reports = [
        check_periodic_independence(
            build_uniform(n, rng), eigenvalues, period, tol
        )
        for _ in range(draws)
    ]
    return _merge("periodic_independence_monte_carlo", reports, tol)


def _merge(
    name: str, reports: Sequence[HypothesisReport], tol: float
) -> HypothesisReport:
    passes = sum(r.passed for r in reports)
    return HypothesisReport(
        check=name,
        passed=passes == len(reports),
        statistic=min((r.statistic for r in reports), default=0.0),
        tolerance=tol,
        samples=len(reports),
        details=f"{passes}/{len(reports)} draws passed",
    )


def check_embedding_dimension(
    res: ReservoirSystem, q: int, periods: Sequence[int] = ()
) -> HypothesisReport:
    """Shape rule ``N > max(2q, l)``, l the lcm of the known periods."""
    ell = math.lcm(*periods) if periods else 1
    needed = max(2 * q, ell)
    return HypothesisReport(
        check="embedding_dimension",
        passed=res.n > needed,
        statistic=float(res.n),
        tolerance=float(needed),
        samples=1,
        details=f"N={res.n}, 2q={2 * q}, lcm of periods={ell}",
    )
