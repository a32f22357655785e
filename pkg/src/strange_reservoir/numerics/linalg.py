"""Dense linear algebra for small reservoir matrices.

Everything here is a pure function of its inputs and, where randomness is
involved, of an explicit :class:`numpy.random.Generator`.
"""

import logging
import math
from dataclasses import dataclass
from typing import Final, List, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

DenseMatrix = NDArray[np.float64]
DenseVector = NDArray[np.float64]
RngState = np.random.Generator

NORM_REL_TOL: Final = 1e-10
GELFAND_MAX_SQUARINGS: Final = 60
RANK_TOL: Final = 1e-10
JACOBI_REL_TOL: Final = 1e-12
JACOBI_MAX_SWEEPS: Final = 100


class DimensionError(ValueError):
    """Raised when array shapes do not fit the operation."""


class SpectralRadiusNotConverged(ArithmeticError):
    """Raised when repeated squaring did not settle within the cap."""

    def __init__(self, estimate: float, squarings: int) -> None:
        super().__init__(
            f"spectral radius estimate {estimate!r} not converged after"
            f" {squarings} squarings"
        )
        self.estimate = estimate
        self.squarings = squarings


def _require_square(a: DenseMatrix) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got {a.shape}")


def operator_norm(a: DenseMatrix) -> float:
    """Spectral norm ``sqrt(lambda_max(A^T A))`` by power iteration."""
    a = np.asarray(a, dtype=float)
    _require_square(a)
    n = a.shape[0]
    gram = a.T @ a
    # fixed start vector keeps the estimate deterministic and makes the
    # norm of s * A exactly |s| times the norm of A up to rounding
    v = np.linspace(1.0, 2.0, n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(10 * n * n):
        w = gram @ v
        w_norm = np.linalg.norm(w)
        if w_norm == 0.0:
            return 0.0
        v = w / w_norm
        previous, estimate = estimate, float(v @ gram @ v)
        if abs(estimate - previous) <= NORM_REL_TOL * estimate:
            break
    return math.sqrt(max(estimate, 0.0))


def spectral_radius(a: DenseMatrix, tol: float = 1e-10) -> float:
    """Estimate rho(A) with Gelfand's formula by repeated squaring.

    ``A^(2^k) = exp(log_scale) * B_k`` with ``||B_k|| = 1``, so the estimate
    ``exp(log_scale / 2^k)`` never under- or overflows. An estimate is
    accepted once ``2^k >= N``, where a nilpotent ``A`` has vanished, and
    after two successive changes below ``tol``.
    """
    a = np.asarray(a, dtype=float)
    _require_square(a)
    if tol <= 0:
        raise ValueError("tol must be positive")

    n = a.shape[0]
    scale = operator_norm(a)
    if scale == 0.0:
        return 0.0
    b = a / scale
    log_scale = math.log(scale)
    estimate = previous = math.inf
    settled = 0
    for k in range(1, GELFAND_MAX_SQUARINGS + 1):
        b = b @ b
        s = operator_norm(b)
        if s < np.finfo(float).tiny:
            # A^(2^k) vanished or underflowed
            return 0.0
        b /= s
        log_scale = 2.0 * log_scale + math.log(s)
        previous, estimate = estimate, math.exp(log_scale / 2.0**k)
        if 2**k >= n and abs(estimate - previous) < tol:
            settled += 1
            if settled == 2:
                return estimate
        else:
            settled = 0
    raise SpectralRadiusNotConverged(estimate, GELFAND_MAX_SQUARINGS)


def haar_orthogonal(n: int, rng: RngState) -> DenseMatrix:
    """Draw Q from the Haar measure on O(n).

    QR of a Gaussian matrix with the columns of Q multiplied by
    ``sign(diag(R))`` so that the factorization is unique.
    """
    if n < 1:
        raise DimensionError("n must be at least 1")
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def krylov_matrix(a: DenseMatrix, c: DenseVector) -> DenseMatrix:
    """Return ``[C | AC | ... | A^(N-1) C]``."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    _require_square(a)
    n = a.shape[0]
    if c.shape != (n,):
        raise DimensionError(
            f"input vector of shape {c.shape} does not fit {a.shape}"
        )
    k = np.empty((n, n))
    k[:, 0] = c
    for j in range(1, n):
        k[:, j] = a @ k[:, j - 1]
    return k


def pivot_ratios(m: DenseMatrix) -> DenseVector:
    """|diag(R)| / max|diag(R)| of a column-pivoted QR, in pivot order."""
    m = np.asarray(m)
    if m.ndim != 2 or m.size == 0:
        raise DimensionError(f"expected a non-empty matrix, got {m.shape}")
    r = scipy.linalg.qr(m, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(r))
    top = d.max() if d.size else 0.0
    if top == 0.0:
        return np.zeros_like(d, dtype=float)
    return d / top


def numerical_rank(m: DenseMatrix, tol: float = RANK_TOL) -> int:
    """Number of pivots of a column-pivoted QR above ``tol`` times the
    largest one."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return int(np.count_nonzero(pivot_ratios(m) > tol))


def realify(m: NDArray[np.complex128]) -> DenseMatrix:
    """Real 2N x 2q form of a complex N x q matrix.

    Its real rank is twice the complex rank of ``m``.
    """
    m = np.asarray(m, dtype=complex)
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def jacobi_eigh(
    s: DenseMatrix, rel_tol: float = JACOBI_REL_TOL
) -> Tuple[DenseVector, DenseMatrix]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and eigenvectors as columns.
    """
    s = np.array(s, dtype=float)
    _require_square(s)
    if not np.allclose(s, s.T):
        raise DimensionError("matrix is not symmetric")
    n = s.shape[0]
    v = np.eye(n)

    def off_norm(x: DenseMatrix) -> float:
        return float(np.sqrt(2.0 * np.sum(np.triu(x, 1) ** 2)))

    target = rel_tol * float(np.linalg.norm(s))
    for _ in range(JACOBI_MAX_SWEEPS):
        if off_norm(s) <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                g = 100.0 * abs(s[p, q])
                if abs(s[p, p]) + g == abs(s[p, p]) and (
                    abs(s[q, q]) + g == abs(s[q, q])
                ):
                    # below the rounding level of both diagonal entries
                    s[p, q] = s[q, p] = 0.0
                    continue
                theta = (s[q, q] - s[p, p]) / (2.0 * s[p, q])
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.hypot(theta, 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                # S <- J^T S J with J the (p, q) plane rotation
                col_p, col_q = s[:, p].copy(), s[:, q].copy()
                s[:, p] = c * col_p - sn * col_q
                s[:, q] = sn * col_p + c * col_q
                row_p, row_q = s[p, :].copy(), s[q, :].copy()
                s[p, :] = c * row_p - sn * row_q
                s[q, :] = sn * row_p + c * row_q
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - sn * vec_q
                v[:, q] = sn * vec_p + c * vec_q
    else:
        logger.warning(
            "Jacobi sweeps exhausted with off-diagonal norm %g",
            off_norm(s),
        )
    eigenvalues = np.diag(s).copy()
    order = np.argsort(eigenvalues)[::-1]
    return eigenvalues[order], v[:, order]


def whiten(data: Sequence[DenseVector], tol: float = RANK_TOL) -> DenseMatrix:
    """Rows of ``data`` in principal coordinates scaled to unit variance.

    Directions whose singular value is at most ``tol`` times the largest
    are dropped, so the result has as many columns as the numerical rank of
    the centred data (none when every row is the same).
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError("whitening needs at least two data points")
    u, s, _ = scipy.linalg.svd(x - x.mean(axis=0), full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((x.shape[0], 0))
    return u[:, s > tol * s[0]] * math.sqrt(x.shape[0] - 1)


@dataclass
class PcaResult:
    projections: DenseMatrix
    components: DenseMatrix
    explained_variance: List[float]
    mean: DenseVector
    total_variance: float

    @property
    def explained_ratio(self) -> float:
        """Share of the total variance carried by the kept components."""
        if self.total_variance == 0.0:
            return 1.0
        return sum(self.explained_variance) / self.total_variance


def pca_project(data: Sequence[DenseVector], k: int) -> PcaResult:
    """Project ``data`` onto its top ``k`` principal components.

    Each component's largest-magnitude entry is made positive so the output
    does not depend on eigensolver sign conventions.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError("PCA needs at least two data points")
    n = x.shape[1]
    if not 1 <= k <= n:
        raise DimensionError(f"k={k} outside 1..{n}")
    mean = x.mean(axis=0)
    centered = x - mean
    covariance = centered.T @ centered / (x.shape[0] - 1)
    eigenvalues, vectors = jacobi_eigh(covariance)
    components = vectors[:, :k].copy()
    for j in range(k):
        if components[np.argmax(np.abs(components[:, j])), j] < 0:
            components[:, j] *= -1.0
    return PcaResult(
        projections=centered @ components,
        components=components,
        explained_variance=[float(e) for e in eigenvalues[:k]],
        mean=mean,
        total_variance=float(np.trace(covariance)),
    )
