"""Factored solvers: rank-projected initialization, SVRG and full-gradient descent.

The factored objective is the sample loss at ``U V^T`` plus the balancing
penalty ``||U^T U - V^T V||_F^2 / 8``.
"""

from dataclasses import dataclass, field

import numpy as np

from lowrank_svrg.errors import DivergenceError
from lowrank_svrg.linalg import FactorPair, procrustes_distance, spectral_norm_sq, top_r_svd
from lowrank_svrg.models import grad_component, grad_full, loss_full, project_factor

__all__ = [
    "SvrgConfig",
    "InitConfig",
    "GdConfig",
    "IterTrace",
    "TracePoint",
    "factored_objective",
    "factored_full_gradient",
    "semi_stochastic_gradient",
    "resolve_step",
    "init_solve",
    "svrg_solve",
    "gd_solve",
]

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class SvrgConfig:
    """SVRG hyperparameters.

    ``eta=None`` selects the automatic step ``step_coef / ||Z0||_2^2``.
    ``m=None`` means one inner step per component (``m = n``).
    """

    eta: float | None = None
    step_coef: float = 0.05
    m: int | None = None
    S: int = 40
    snapshot_rule: str = "last_iterate"
    project: bool = True
    seed: int = 0
    memoize: bool = True

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.step_coef > 0:
            raise ValueError("step_coef must be positive")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be at least 1")
        if self.S < 0:
            raise ValueError("S must be nonnegative")
        if self.snapshot_rule not in ("last_iterate", "uniform_random"):
            raise ValueError(f"unknown snapshot_rule {self.snapshot_rule!r}")


@dataclass(frozen=True)
class InitConfig:
    tau: float = 1.0
    T: int = 20
    stop_tol: float | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")


@dataclass(frozen=True)
class GdConfig:
    eta: float | None = None
    step_coef: float = 0.5
    T: int = 500
    project: bool = True

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.step_coef > 0:
            raise ValueError("step_coef must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")


@dataclass(frozen=True)
class TracePoint:
    stage: int
    effective_passes: float
    objective: float
    rel_sq_err: float | None = None
    mse: float | None = None
    distance: float | None = None


@dataclass
class IterTrace:
    points: list = field(default_factory=list)
    eta: float | None = None

    def append(self, point):
        if self.points and point.effective_passes <= self.points[-1].effective_passes:
            raise ValueError("effective passes must increase strictly")
        self.points.append(point)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, k):
        return self.points[k]


def _check_pair(P, Z):
    if Z.shape != (P.d1, P.d2):
        raise ValueError(f"factor pair induces {Z.shape}, problem is {(P.d1, P.d2)}")


def _balance_grads(U, V):
    D = U.T @ U - V.T @ V
    return 0.5 * U @ D, -0.5 * V @ D


def factored_objective(P, Z):
    _check_pair(P, Z)
    D = Z.U.T @ Z.U - Z.V.T @ Z.V
    return loss_full(P, Z.product()) + 0.125 * float(np.sum(D * D))


def factored_full_gradient(P, Z):
    """Gradient of :func:`factored_objective` with respect to ``(U, V)``."""
    _check_pair(P, Z)
    G = grad_full(P, Z.product())
    RU, RV = _balance_grads(Z.U, Z.V)
    return FactorPair(G @ Z.V + RU, G.T @ Z.U + RV)


def semi_stochastic_gradient(P, i, Z, Xsnap, Gsnap_full, Gsnap_comp_i):
    """Variance-reduced gradient of component ``i`` at ``Z``.

    The component loss gradient at ``U V^T`` is corrected by the snapshot
    control variate ``Gsnap_full - Gsnap_comp_i`` before being pushed through
    the factors; the snapshot matrix enters both the ``U`` and the ``V`` update.
    """
    _check_pair(P, Z)
    if Gsnap_full.shape != (P.d1, P.d2) or Gsnap_comp_i.shape != (P.d1, P.d2):
        raise ValueError("snapshot gradients must match the problem shape")
    D = grad_component(P, i, Z.product()) - Gsnap_comp_i + Gsnap_full
    RU, RV = _balance_grads(Z.U, Z.V)
    return FactorPair(D @ Z.V + RU, D.T @ Z.U + RV)


def _factorize(X, r):
    svd = top_r_svd(X, r)
    root = np.sqrt(svd.sigmas)
    return svd.left * root, svd.right * root


def init_solve(P, r, cfg=InitConfig()):
    """Rank-projected gradient descent from zero, returned as balanced factors."""
    X = np.zeros((P.d1, P.d2))
    for t in range(cfg.T):
        step = X - cfg.tau * grad_full(P, X)
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > DIVERGENCE_NORM:
            raise DivergenceError(f"initialization diverged at step {t}", stage=0, step=t)
        X_new = top_r_svd(step, r).reconstruct()
        if cfg.stop_tol is not None:
            change = np.linalg.norm(X_new - X) / max(1.0, np.linalg.norm(X))
            X = X_new
            if change < cfg.stop_tol:
                break
        else:
            X = X_new
    if not np.any(X):
        return FactorPair.zeros(P.d1, P.d2, r)
    U, V = _factorize(X, r)
    return FactorPair(project_factor(P, U), project_factor(P, V))


def resolve_step(eta, step_coef, Z0):
    """Explicit ``eta`` or ``step_coef / ||Z0||_2^2``."""
    if eta is not None:
        return float(eta)
    s = spectral_norm_sq(Z0)
    if s == 0.0:
        raise ValueError("automatic step size needs a nonzero initial factor")
    return step_coef / s


def _record(trace, P, Z, stage, passes, oracle):
    X = Z.product()
    rel = mse = dist = None
    if oracle is not None:
        err = float(np.sum((X - oracle.Xstar) ** 2))
        rel = err / oracle.fro_norm_sq
        mse = err / (P.d1 * P.d2)
        dist = procrustes_distance(Z, oracle.Zstar)
    trace.append(TracePoint(stage, passes, factored_objective(P, Z), rel, mse, dist))


def _guard(U, V, stage, step):
    nu, nv = np.linalg.norm(U), np.linalg.norm(V)
    if not (np.isfinite(nu) and np.isfinite(nv)) or max(nu, nv) > DIVERGENCE_NORM:
        where = f"stage {stage}" + ("" if step is None else f", step {step}")
        raise DivergenceError(f"iterate diverged at {where}", stage=stage, step=step)


def svrg_solve(P, Z0, cfg=SvrgConfig(), oracle=None):
    """Stochastic variance-reduced gradient descent on the factored objective.

    Returns the final factor pair and a trace with one point per stage
    (stage 0 is ``Z0``).
    """
    _check_pair(P, Z0)
    n = P.n
    m = n if cfg.m is None else cfg.m
    eta = resolve_step(cfg.eta, cfg.step_coef, Z0) if cfg.S > 0 else cfg.eta
    rng = np.random.Generator(np.random.Philox(key=cfg.seed & ((1 << 64) - 1)))
    per_stage = 1.0 + m * P.b / P.N
    trace = IterTrace(eta=eta)
    _record(trace, P, Z0, 0, 0.0, oracle)
    U, V = Z0.U, Z0.V
    for s in range(1, cfg.S + 1):
        Xsnap = U @ V.T
        Gfull = grad_full(P, Xsnap)
        cache = {}
        picks = rng.integers(0, n, size=m)
        # Index of the inner iterate U^keep that becomes the stage output.
        keep = m if cfg.snapshot_rule == "last_iterate" else int(rng.integers(0, m))
        U_out, V_out = U, V
        for t in range(m):
            i = int(picks[t])
            Gi = cache.get(i)
            if Gi is None:
                Gi = grad_component(P, i, Xsnap)
                if cfg.memoize:
                    cache[i] = Gi
            D = grad_component(P, i, U @ V.T) - Gi + Gfull
            W = U.T @ U - V.T @ V
            U, V = (
                U - eta * (D @ V + 0.5 * U @ W),
                V - eta * (D.T @ U - 0.5 * V @ W),
            )
            if cfg.project:
                U = project_factor(P, U)
                V = project_factor(P, V)
            _guard(U, V, s, t)
            if t + 1 == keep:
                U_out, V_out = U, V
        U, V = U_out, V_out
        _record(trace, P, FactorPair(U, V), s, s * per_stage, oracle)
    return FactorPair(U, V), trace


def gd_solve(P, Z0, cfg=GdConfig(), oracle=None):
    """Projected full-gradient descent on the factored objective (one pass per step)."""
    _check_pair(P, Z0)
    eta = resolve_step(cfg.eta, cfg.step_coef, Z0) if cfg.T > 0 else cfg.eta
    trace = IterTrace(eta=eta)
    _record(trace, P, Z0, 0, 0.0, oracle)
    U, V = Z0.U, Z0.V
    for t in range(1, cfg.T + 1):
        G = grad_full(P, U @ V.T)
        W = U.T @ U - V.T @ V
        U, V = U - eta * (G @ V + 0.5 * U @ W), V - eta * (G.T @ U - 0.5 * V @ W)
        if cfg.project:
            U = project_factor(P, U)
            V = project_factor(P, V)
        _guard(U, V, t, None)
        _record(trace, P, FactorPair(U, V), t, float(t), oracle)
    return FactorPair(U, V), trace
