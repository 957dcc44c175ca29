"""Fast numerical self-checks run by ``lowrank-svrg selftest``."""

import numpy as np

from lowrank_svrg.datagen import GenSpec, gen_ground_truth, gen_problem
from lowrank_svrg.linalg import FactorPair
from lowrank_svrg.models import Link, grad_full, loss_full
from lowrank_svrg.solvers import (
    InitConfig,
    SvrgConfig,
    factored_full_gradient,
    init_solve,
    semi_stochastic_gradient,
    svrg_solve,
)
from lowrank_svrg.models import grad_component


def _fd_rel_error(f, X, G):
    num = np.zeros_like(X)
    it = np.nditer(X, flags=["multi_index"])
    for _ in it:
        j = it.multi_index
        h = 1e-5 * (1.0 + abs(X[j]))
        Xp, Xm = X.copy(), X.copy()
        Xp[j] += h
        Xm[j] -= h
        num[j] = (f(Xp) - f(Xm)) / (2 * h)
    return np.linalg.norm(num - G) / max(np.linalg.norm(num), 1e-300)


def _problems(seed):
    base = dict(d1=5, d2=4, r=2, N=12, b=3, seed=seed, noise_nu=0.3)
    yield "sensing", GenSpec(model="sensing", **base)
    yield "completion", GenSpec(model="completion", **base)
    yield "onebit-logistic", GenSpec(model="onebit", **base)
    yield "onebit-probit", GenSpec(model="onebit", link=Link("probit", 0.5), **base)


def check_gradients():
    worst = 0.0
    rng = np.random.default_rng(0)
    for name, spec in _problems(1):
        gt = gen_ground_truth(spec)
        P = gen_problem(gt, spec)
        X = rng.standard_normal((spec.d1, spec.d2))
        tol = 1e-4 if name.endswith("probit") else 1e-5
        worst = max(worst, _fd_rel_error(lambda Y: loss_full(P, Y), X, grad_full(P, X)) / tol)
    return worst <= 1.0, f"worst finite-difference error / tolerance = {worst:.3g}"


def check_unbiasedness():
    worst = 0.0
    rng = np.random.default_rng(1)
    for _, spec in _problems(2):
        gt = gen_ground_truth(spec)
        P = gen_problem(gt, spec)
        Z = FactorPair(rng.standard_normal((spec.d1, 2)), rng.standard_normal((spec.d2, 2)))
        Zs = FactorPair(rng.standard_normal((spec.d1, 2)), rng.standard_normal((spec.d2, 2)))
        Xs = Zs.product()
        Gf = grad_full(P, Xs)
        acc = [semi_stochastic_gradient(P, i, Z, Xs, Gf, grad_component(P, i, Xs)) for i in range(P.n)]
        full = factored_full_gradient(P, Z)
        dev = max(
            np.max(np.abs(np.mean([g.U for g in acc], axis=0) - full.U)),
            np.max(np.abs(np.mean([g.V for g in acc], axis=0) - full.V)),
        )
        worst = max(worst, dev)
    return worst <= 1e-12, f"max |mean semi-stochastic - full| = {worst:.3g}"


def check_recovery():
    spec = GenSpec(30, 25, 2, "sensing", N=600, b=12, seed=3)
    gt = gen_ground_truth(spec)
    P = gen_problem(gt, spec)
    Z0 = init_solve(P, 2, InitConfig(tau=0.5, T=10))
    _, trace = svrg_solve(P, Z0, SvrgConfig(S=30, seed=3), oracle=gt)
    err = trace[-1].rel_sq_err
    return np.sqrt(err) < 1e-3, f"noiseless sensing relative error = {np.sqrt(err):.3g}"


CHECKS = {
    "gradients": check_gradients,
    "unbiasedness": check_unbiasedness,
    "recovery": check_recovery,
}


def run_selftest(out):
    ok = True
    for name, check in CHECKS.items():
        passed, detail = check()
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", file=out)
    return ok
