"""Dense matrix primitives used by the solvers and metrics.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Factored
iterates are carried around as :class:`FactorPair`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from lowrank_svrg.errors import NumericalError

__all__ = [
    "FactorPair",
    "SvdTriple",
    "as_mat",
    "top_r_svd",
    "project_rank_r",
    "procrustes_distance",
    "spectral_norm_sq",
]

POWER_ITER_CAP = 1000
POWER_ITER_RTOL = 1e-8


def as_mat(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class FactorPair:
    """Factored iterate ``Z = [U; V]`` inducing ``X = U @ V.T``."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = as_mat(self.U, "U")
        V = as_mat(self.V, "V")
        if U.shape[1] != V.shape[1] or U.shape[1] < 1:
            raise ValueError(
                f"U and V must share a positive column count, got {U.shape} and {V.shape}"
            )
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def shape(self):
        """Shape ``(d1, d2)`` of the induced matrix."""
        return self.U.shape[0], self.V.shape[0]

    def product(self):
        return self.U @ self.V.T

    def stacked(self):
        return np.vstack([self.U, self.V])

    @classmethod
    def from_stacked(cls, Z, d1):
        Z = np.asarray(Z, dtype=np.float64)
        return cls(Z[:d1], Z[d1:])

    @classmethod
    def zeros(cls, d1, d2, r):
        return cls(np.zeros((d1, r)), np.zeros((d2, r)))


@dataclass(frozen=True)
class SvdTriple:
    left: np.ndarray
    sigmas: np.ndarray
    right: np.ndarray

    def reconstruct(self):
        return (self.left * self.sigmas) @ self.right.T


def _dense_svd(M):
    # gesdd is fast; gesvd is the slower but more robust QR-iteration driver.
    last = None
    for attempt, driver in enumerate(("gesdd", "gesvd"), start=1):
        try:
            return scipy.linalg.svd(
                M, full_matrices=False, check_finite=False, lapack_driver=driver
            )
        except np.linalg.LinAlgError as exc:
            last = exc
    raise NumericalError(
        f"SVD of {M.shape[0]}x{M.shape[1]} matrix did not converge after {attempt} attempts: {last}"
    )


def top_r_svd(M, r):
    """Top-``r`` singular triples of ``M``.

    The entry of largest magnitude in every returned left singular vector is
    made nonnegative so that results are reproducible.
    """
    M = as_mat(M)
    r = int(r)
    if not 1 <= r <= min(M.shape):
        raise ValueError(f"rank r={r} out of range for a {M.shape[0]}x{M.shape[1]} matrix")
    U, s, Vt = _dense_svd(M)
    U = U[:, :r].copy()
    V = Vt[:r].T.copy()
    s = np.maximum(s[:r], 0.0)
    pivot = np.argmax(np.abs(U), axis=0)
    flip = np.where(U[pivot, np.arange(r)] < 0, -1.0, 1.0)
    return SvdTriple(U * flip, s, V * flip)


def project_rank_r(M, r):
    """Best rank-``r`` Frobenius approximation of ``M``."""
    return top_r_svd(M, r).reconstruct()


def procrustes_distance(Z, Zref):
    """Distance between factor pairs up to an optimal orthonormal rotation.

    Computes ``min_R ||Z - Zref @ R||_F`` over orthonormal ``R`` via the
    nuclear norm of ``Zref.T @ Z``.
    """
    A = Z.stacked()
    B = Zref.stacked()
    if A.shape != B.shape or Z.shape != Zref.shape:
        raise ValueError(f"factor pairs have mismatched shapes {A.shape} and {B.shape}")
    nuc = np.linalg.svd(B.T @ A, compute_uv=False).sum()
    d2 = np.sum(A * A) + np.sum(B * B) - 2.0 * nuc
    return float(np.sqrt(max(d2, 0.0)))


def optimal_rotation(Z, Zref):
    """Orthonormal ``R`` minimizing ``||Z - Zref @ R||_F``."""
    P, _, Qt = np.linalg.svd(Zref.stacked().T @ Z.stacked())
    return P @ Qt


def _power_iteration(G, x):
    lam = 0.0
    for _ in range(POWER_ITER_CAP):
        y = G @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        Gx = G @ x
        lam = float(x @ Gx)
        # The residual bounds the distance from lam to an eigenvalue.
        if np.linalg.norm(Gx - lam * x) <= POWER_ITER_RTOL * abs(lam):
            break
    return lam


def spectral_norm_sq(Z):
    """Squared spectral norm of the stacked factor ``[U; V]``.

    Power iteration on the small Gram matrix ``Z.T @ Z`` from the normalized
    all-ones vector.
    """
    S = Z.stacked()
    G = S.T @ S
    r = G.shape[0]
    trace = float(np.trace(G))
    if trace == 0.0:
        return 0.0
    lam = _power_iteration(G, np.full(r, 1.0 / np.sqrt(r)))
    # The largest eigenvalue is at least the mean one; falling short means the
    # start vector was orthogonal to the top eigenvector, so retry on the axes.
    k = 0
    while lam < trace / r * (1.0 - 1e-12) and k < r:
        lam = max(lam, _power_iteration(G, np.eye(r)[k]))
        k += 1
    return lam
