import numpy as np
import pytest

from lowrank_svrg.linalg import FactorPair


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one ``PASS``/``FAIL`` line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def _report(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        lines.append((k, line))
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_pair(rng, d1, d2, r, scale=1.0):
    return FactorPair(scale * rng.standard_normal((d1, r)), scale * rng.standard_normal((d2, r)))


def random_orthonormal(rng, r):
    Q, R = np.linalg.qr(rng.standard_normal((r, r)))
    return Q * np.sign(np.diag(R))


def eig_singular_values(M):
    """Singular values of ``M`` from the eigenvalues of ``M.T @ M`` (descending)."""
    w = np.linalg.eigvalsh(M.T @ M)[::-1]
    return np.sqrt(np.clip(w, 0.0, None))


def fd_gradient(f, X):
    """Central differences with step ``1e-5 * (1 + |x|)`` per coordinate."""
    G = np.zeros_like(X)
    for j in np.ndindex(X.shape):
        h = 1e-5 * (1.0 + abs(X[j]))
        Xp, Xm = X.copy(), X.copy()
        Xp[j] += h
        Xm[j] -= h
        G[j] = (f(Xp) - f(Xm)) / (2.0 * h)
    return G


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def semi_stochastic_variance(P, Z, Zsnap):
    """Mean squared deviation of the semi-stochastic gradients over all components."""
    from lowrank_svrg.models import grad_component, grad_full
    from lowrank_svrg.solvers import semi_stochastic_gradient

    Xs = Zsnap.product()
    Gf = grad_full(P, Xs)
    grads = [
        semi_stochastic_gradient(P, i, Z, Xs, Gf, grad_component(P, i, Xs)).stacked()
        for i in range(P.n)
    ]
    G = np.stack(grads)
    return float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=(1, 2))))


def variance_slope(P, Zstar, direction, deltas=(1e-1, 1e-2, 1e-3)):
    """Fitted log-log slope of gradient variance against the distance to ``Zstar``."""
    from lowrank_svrg.linalg import procrustes_distance

    S = direction.stacked() / np.linalg.norm(direction.stacked())
    d1 = Zstar.U.shape[0]
    dist, var = [], []
    for delta in deltas:
        Z = FactorPair.from_stacked(Zstar.stacked() + delta * S, d1)
        dist.append(procrustes_distance(Z, Zstar))
        var.append(semi_stochastic_variance(P, Z, Zstar))
    return float(np.polyfit(np.log(dist), np.log(var), 1)[0])


def factor_pairs(rng, count, near=False):
    """Random ``(Z, Zref)`` pairs of matching shape; ``near`` perturbs ``Zref`` slightly."""
    for _ in range(count):
        d1, d2 = rng.integers(2, 8, size=2)
        r = int(rng.integers(1, min(d1 + d2, 4) + 1))
        Zp = random_pair(rng, d1, d2, r)
        if near:
            Z = FactorPair(*(A + 0.05 * rng.standard_normal(A.shape) for A in (Zp.U, Zp.V)))
        else:
            Z = random_pair(rng, d1, d2, r)
        yield Z, Zp


def gram_gap_ratio(Z, Zp):
    """``d(Z, Zp)^2`` over ``||Z Z^T - Zp Zp^T||_F^2 / (2 (sqrt 2 - 1) sigma_r(Zp)^2)``; at most 1."""
    from lowrank_svrg.linalg import procrustes_distance

    S, Sp = Z.stacked(), Zp.stacked()
    sr = np.linalg.svd(Sp, compute_uv=False)[-1]
    rhs = np.sum((S @ S.T - Sp @ Sp.T) ** 2) / (2 * (np.sqrt(2) - 1) * sr**2)
    return (procrustes_distance(Z, Zp) ** 2 - 1e-12) / rhs


def gram_perturbation_ratio(Z, Zp):
    """``||Z Z^T - Zp Zp^T||_F`` over ``(9/4) ||Zp||_2 d(Z, Zp)``; None outside ``d <= ||Zp||_2 / 4``."""
    from lowrank_svrg.linalg import procrustes_distance

    S, Sp = Z.stacked(), Zp.stacked()
    d = procrustes_distance(Z, Zp)
    norm2 = np.linalg.norm(Sp, 2)
    if d > norm2 / 4:
        return None
    return (np.linalg.norm(S @ S.T - Sp @ Sp.T) - 1e-12) / (2.25 * norm2 * d)
