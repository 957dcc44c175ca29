"""Observation models: matrix sensing, matrix completion, one-bit completion.

Every problem splits its ``N = n * b`` observations into ``n`` components;
component ``i`` owns observations ``[i*b, (i+1)*b)``. Generators are expected
to hand observations over in random order so the contiguous blocks form a
random partition.

The sample loss of each model is exposed through :func:`loss_full`,
:func:`grad_full` and :func:`grad_component`; :func:`project_factor` maps a
factor onto its feasible set.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, log_ndtr, ndtr


__all__ = [
    "Link",
    "SensingProblem",
    "StreamedSensingProblem",
    "CompletionProblem",
    "OneBitProblem",
    "link_eval",
    "loss_full",
    "grad_full",
    "grad_component",
    "project_factor",
]

_F_LO = np.finfo(np.float64).tiny
_F_HI = 1.0 - np.finfo(np.float64).epsneg
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Link:
    """Probability ``f(x)`` that a one-bit observation is +1.

    ``kind`` is ``"logistic"`` or ``"probit"``; for probit ``f(x) = Phi(x / sigma)``.
    """

    kind: str = "logistic"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("logistic", "probit"):
            raise ValueError(f"unknown link kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("link sigma must be positive")


def link_eval(link, x):
    """Return ``(f, f', log f, log(1 - f))`` evaluated elementwise at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if link.kind == "logistic":
        f = expit(x)
        fprime = expit(x) * expit(-x)
        log_f = log_expit(x)
        log_1mf = log_expit(-x)
    else:
        z = x / link.sigma
        f = ndtr(z)
        fprime = np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / link.sigma
        log_f = log_ndtr(z)
        log_1mf = log_ndtr(-z)
    return np.clip(f, _F_LO, _F_HI), fprime, log_f, log_1mf


def _onebit_residual(link, x, positive):
    """Derivative of the per-entry negative log-likelihood with respect to ``x``."""
    if link.kind == "logistic":
        # f' = f(1 - f) turns -f'/f and f'/(1 - f) into f - 1{Y=+1}.
        return expit(x) - positive
    z = x / link.sigma
    s = np.where(positive, z, -z)
    # phi(s) / Phi(s), evaluated in log space to survive deep tails.
    ratio = np.exp(-0.5 * s * s - _LOG_SQRT_2PI - log_ndtr(s)) / link.sigma
    return np.where(positive, -ratio, ratio)


def _check_partition(N, n, b):
    if n < 1 or b < 1 or N != n * b:
        raise ValueError(f"need N = n * b with n, b >= 1, got N={N}, n={n}, b={b}")


def _check_omega(rows, cols, d1, d2):
    if rows.shape != cols.shape or rows.ndim != 1:
        raise ValueError("omega rows and cols must be 1-D arrays of equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= d1 or cols.min() < 0 or cols.max() >= d2):
        raise ValueError("omega index out of range")
    flat = rows * d2 + cols
    if np.unique(flat).size != flat.size:
        raise ValueError("omega contains repeated index pairs")


@dataclass(frozen=True, eq=False)
class SensingProblem:
    """Linear measurements ``y_i = <A_i, X*> + noise``.

    ``sensing_mats`` has shape ``(N, d1, d2)``; it is stored flattened as an
    ``N x (d1*d2)`` design matrix.
    """

    sensing_mats: np.ndarray
    y: np.ndarray
    n: int
    kind = "sensing"
    design: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.sensing_mats, dtype=np.float64)
        if A.ndim != 3:
            raise ValueError("sensing_mats must have shape (N, d1, d2)")
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if y.shape[0] != A.shape[0]:
            raise ValueError("y length must equal the number of sensing matrices")
        N = A.shape[0]
        _check_partition(N, self.n, N // self.n if self.n else 0)
        object.__setattr__(self, "sensing_mats", A)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "design", A.reshape(N, -1))

    @property
    def d1(self):
        return self.sensing_mats.shape[1]

    @property
    def d2(self):
        return self.sensing_mats.shape[2]

    @property
    def N(self):
        return self.y.shape[0]

    @property
    def b(self):
        return self.N // self.n

    alpha = None

    def design_blocks(self, sl):
        """Yield ``(A_block, y_block)`` pairs covering the rows in ``sl``."""
        yield self.design[sl], self.y[sl]


class StreamedSensingProblem:
    """Sensing problem whose design is regenerated block by block.

    ``block_fn(i)`` must return the ``b x (d1*d2)`` design rows of component
    ``i`` deterministically. Trades compute for memory on large ``N`` sweeps.
    """

    kind = "sensing"
    alpha = None

    def __init__(self, d1, d2, y, n, block_fn):
        self.d1 = int(d1)
        self.d2 = int(d2)
        self.y = np.asarray(y, dtype=np.float64).ravel()
        self.n = int(n)
        _check_partition(self.N, self.n, self.N // self.n if self.n else 0)
        self._block_fn = block_fn

    @property
    def N(self):
        return self.y.shape[0]

    @property
    def b(self):
        return self.N // self.n

    @property
    def sensing_mats(self):
        return np.concatenate([self._block_fn(i) for i in range(self.n)]).reshape(
            self.N, self.d1, self.d2
        )

    def design_blocks(self, sl):
        b = self.b
        start = 0 if sl.start is None else sl.start
        stop = self.N if sl.stop is None else sl.stop
        for i in range(start // b, stop // b):
            yield self._block_fn(i), self.y[i * b : (i + 1) * b]


@dataclass(frozen=True, eq=False)
class _EntryProblem:
    d1: int
    d2: int
    rows: np.ndarray
    cols: np.ndarray
    n: int
    alpha: float | None = None

    def _validate(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        _check_omega(rows, cols, self.d1, self.d2)
        N = rows.shape[0]
        _check_partition(N, self.n, N // self.n if self.n else 0)
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @property
    def N(self):
        return self.rows.shape[0]

    @property
    def b(self):
        return self.N // self.n

    @property
    def p(self):
        return self.N / (self.d1 * self.d2)

    @property
    def p_comp(self):
        return self.b / (self.d1 * self.d2)

    @property
    def omega(self):
        return np.column_stack([self.rows, self.cols])


@dataclass(frozen=True, eq=False)
class CompletionProblem(_EntryProblem):
    """Noisy entries ``Y_jk`` observed on the index set ``omega``."""

    vals: np.ndarray = None
    kind = "completion"

    def __post_init__(self):
        self._validate()
        vals = np.asarray(self.vals, dtype=np.float64).ravel()
        if vals.shape != self.rows.shape:
            raise ValueError("vals must have one entry per observed index")
        object.__setattr__(self, "vals", vals)


@dataclass(frozen=True, eq=False)
class OneBitProblem(_EntryProblem):
    """Signs of noisy entries, ``P(Y_jk = +1) = f(X*_jk)``."""

    signs: np.ndarray = None
    link: Link = Link()
    kind = "onebit"

    def __post_init__(self):
        self._validate()
        signs = np.asarray(self.signs, dtype=np.float64).ravel()
        if signs.shape != self.rows.shape or not np.all(np.abs(signs) == 1.0):
            raise ValueError("signs must be +1/-1, one per observed index")
        object.__setattr__(self, "signs", signs)


def _check_x(P, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (P.d1, P.d2):
        raise ValueError(f"X has shape {X.shape}, expected {(P.d1, P.d2)}")
    return X


def _block(P, i):
    n = P.n
    if not 0 <= i < n:
        raise IndexError(f"component index {i} out of range [0, {n})")
    return slice(i * P.b, (i + 1) * P.b)


def _entry_loss(P, x, sl):
    if P.kind == "completion":
        r = x - P.vals[sl]
        return 0.5 * float(r @ r)
    _, _, log_f, log_1mf = link_eval(P.link, x)
    return -float(np.sum(np.where(P.signs[sl] > 0, log_f, log_1mf)))


def _entry_residual(P, x, sl):
    if P.kind == "completion":
        return x - P.vals[sl]
    return _onebit_residual(P.link, x, (P.signs[sl] > 0).astype(np.float64))


def loss_full(P, X):
    """Sample loss over all ``N`` observations."""
    X = _check_x(P, X)
    if P.kind == "sensing":
        x = X.ravel()
        total = 0.0
        for A, y in P.design_blocks(slice(None)):
            r = A @ x - y
            total += float(r @ r)
        return 0.5 * total / P.N
    return _entry_loss(P, X[P.rows, P.cols], slice(None)) / P.p


def _grad(P, X, sl, scale):
    if P.kind == "sensing":
        x = X.ravel()
        g = np.zeros(x.shape[0])
        for A, y in P.design_blocks(sl):
            g += A.T @ (A @ x - y)
        return g.reshape(P.d1, P.d2) * scale
    rows, cols = P.rows[sl], P.cols[sl]
    G = np.zeros((P.d1, P.d2))
    G[rows, cols] = _entry_residual(P, X[rows, cols], sl) * scale
    return G


def grad_full(P, X):
    """Gradient of :func:`loss_full` at ``X``."""
    X = _check_x(P, X)
    scale = 1.0 / P.N if P.kind == "sensing" else 1.0 / P.p
    return _grad(P, X, slice(None), scale)


def grad_component(P, i, X):
    """Gradient of the ``i``-th component loss at ``X``.

    Normalized by ``1/b`` for sensing and ``1/p_comp`` for the entrywise
    models, so the component gradients average to :func:`grad_full`.
    """
    sl = _block(P, i)
    X = _check_x(P, X)
    scale = 1.0 / P.b if P.kind == "sensing" else 1.0 / P.p_comp
    return _grad(P, X, sl, scale)


def project_factor(P, A):
    """Project a factor onto ``{A : ||A||_{2,inf} <= sqrt(alpha)}``.

    Identity when the problem carries no spikiness bound (sensing, or
    ``alpha=None``).
    """
    A = np.asarray(A, dtype=np.float64)
    if getattr(P, "alpha", None) is None:
        return A
    radius = np.sqrt(P.alpha)
    norms = np.linalg.norm(A, axis=1)
    over = norms > radius
    if not over.any():
        return A
    out = A.copy()
    out[over] *= (radius / norms[over])[:, None]
    return out
