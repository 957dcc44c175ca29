import mpmath
import numpy as np
import pytest

from lowrank_svrg.datagen import GenSpec, gen_ground_truth, gen_problem
from lowrank_svrg.models import (
    CompletionProblem,
    Link,
    OneBitProblem,
    SensingProblem,
    grad_component,
    grad_full,
    link_eval,
    loss_full,
    project_factor,
)

from conftest import fd_gradient, rel_err

PROBIT = Link("probit", 0.5)
MODEL_CASES = [
    ("sensing", Link()),
    ("completion", Link()),
    ("onebit", Link("logistic")),
    ("onebit", PROBIT),
]
CASE_IDS = ["sensing", "completion", "logistic", "probit"]


def make_problem(model, link, seed, nu=0.3, d1=5, d2=4, N=12, b=3):
    spec = GenSpec(d1, d2, 2, model, N=N, b=b, noise_nu=nu, link=link, seed=seed)
    gt = gen_ground_truth(spec)
    return gen_problem(gt, spec), gt


def test_completion_single_entry_loss():
    P = CompletionProblem(2, 2, [0], [0], 1, vals=[1.0])
    assert P.p == 0.25
    assert loss_full(P, np.zeros((2, 2))) == pytest.approx(2.0)


def test_logistic_single_entry_loss_and_gradient():
    P = OneBitProblem(1, 1, [0], [0], 1, signs=[1.0], link=Link("logistic"))
    assert loss_full(P, np.zeros((1, 1))) == pytest.approx(np.log(2.0))
    np.testing.assert_allclose(grad_full(P, np.zeros((1, 1))), [[-0.5]])


def test_logistic_gradient_zero_elsewhere():
    P = OneBitProblem(2, 3, [1], [2], 1, signs=[1.0], link=Link("logistic"))
    G = grad_full(P, np.zeros((2, 3)))
    expected = np.zeros((2, 3))
    expected[1, 2] = -0.5 / P.p
    np.testing.assert_allclose(G, expected)


def test_sensing_one_hot_gradient():
    A = np.zeros((1, 2, 2))
    A[0, 0, 0] = 1.0
    P = SensingProblem(A, [2.0], 1)
    np.testing.assert_allclose(grad_full(P, np.zeros((2, 2))), [[-2.0, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize("model,link", MODEL_CASES, ids=CASE_IDS)
def test_gradient_matches_finite_differences(model, link, rng):
    tol = 1e-4 if link.kind == "probit" else 1e-5
    for seed in range(10):
        P, _ = make_problem(model, link, seed)
        X = rng.standard_normal((P.d1, P.d2))
        num = fd_gradient(lambda Y: loss_full(P, Y), X)
        assert rel_err(grad_full(P, X), num) <= tol


@pytest.mark.parametrize("model,link", MODEL_CASES, ids=CASE_IDS)
def test_component_average_is_full_gradient(model, link, rng):
    P, _ = make_problem(model, link, 3)
    X = rng.standard_normal((P.d1, P.d2))
    avg = np.mean([grad_component(P, i, X) for i in range(P.n)], axis=0)
    np.testing.assert_allclose(avg, grad_full(P, X), atol=1e-12)


@pytest.mark.parametrize("model,link", MODEL_CASES, ids=CASE_IDS)
def test_single_component_equals_full(model, link, rng):
    P, _ = make_problem(model, link, 4, N=12, b=12)
    X = rng.standard_normal((P.d1, P.d2))
    np.testing.assert_allclose(grad_component(P, 0, X), grad_full(P, X), atol=1e-12)


def test_component_index_out_of_range(rng):
    P, _ = make_problem("sensing", Link(), 0)
    with pytest.raises(IndexError):
        grad_component(P, P.n, np.zeros((P.d1, P.d2)))


def test_sensing_component_support_on_one_hot_design():
    d1, d2, N = 3, 4, 6
    A = np.zeros((N, d1, d2))
    cells = [(0, 0), (0, 1), (1, 2), (2, 3), (2, 0), (1, 1)]
    for k, (j, l) in enumerate(cells):
        A[k, j, l] = 1.0
    P = SensingProblem(A, np.arange(1.0, N + 1), 3)
    for i in range(3):
        G = grad_component(P, i, np.zeros((d1, d2)))
        mask = np.zeros((d1, d2), dtype=bool)
        for j, l in cells[2 * i : 2 * i + 2]:
            mask[j, l] = True
        assert np.all(G[~mask] == 0) and np.all(G[mask] != 0)


@pytest.mark.parametrize("model", ["sensing", "completion"])
def test_noiseless_stationarity(model):
    P, gt = make_problem(model, Link(), 5, nu=0.0)
    assert loss_full(P, gt.Xstar) == pytest.approx(0.0, abs=1e-20)
    assert np.max(np.abs(grad_full(P, gt.Xstar))) <= 1e-12


def test_shape_mismatch_rejected():
    P, _ = make_problem("completion", Link(), 0)
    with pytest.raises(ValueError):
        loss_full(P, np.zeros((P.d2, P.d1)))


def test_problem_validation():
    with pytest.raises(ValueError):
        CompletionProblem(2, 2, [0, 0], [1, 1], 1, vals=[1.0, 2.0])
    with pytest.raises(ValueError):
        CompletionProblem(2, 2, [0, 1, 1], [1, 0, 1], 2, vals=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        OneBitProblem(2, 2, [0], [5], 1, signs=[1.0])
    with pytest.raises(ValueError):
        OneBitProblem(2, 2, [0], [0], 1, signs=[0.5])


def test_link_values_at_zero():
    f, fp, _, _ = link_eval(Link("logistic"), 0.0)
    assert (f, fp) == (0.5, 0.25)
    f, _, _, _ = link_eval(PROBIT, 0.0)
    assert f == 0.5


def test_logistic_deep_tail_log():
    _, _, log_f, _ = link_eval(Link("logistic"), -30.0)
    exact = float(-mpmath.log1p(mpmath.exp(mpmath.mpf(30))))
    assert abs(log_f - exact) <= 1e-12 * abs(exact)


@pytest.mark.parametrize("link", [Link("logistic"), PROBIT, Link("probit", 2.0)])
def test_link_logs_finite_and_consistent(link):
    x = np.linspace(-700, 700, 2001)
    f, fp, log_f, log_1mf = link_eval(link, x)
    assert np.all(np.isfinite(log_f)) and np.all(np.isfinite(log_1mf))
    assert np.all((f > 0) & (f < 1))
    assert np.all(np.diff(f) >= 0)
    mid = np.abs(x) < 5
    np.testing.assert_allclose(np.exp(log_f[mid]), f[mid], rtol=1e-12)
    np.testing.assert_allclose(-np.expm1(log_1mf[mid]), f[mid], rtol=1e-12)


def test_probit_derivative_against_mpmath():
    for x in (-3.0, -0.4, 0.0, 1.1, 2.5):
        _, fp, log_f, log_1mf = link_eval(PROBIT, x)
        z = mpmath.mpf(x) / mpmath.mpf(0.5)
        assert fp == pytest.approx(float(mpmath.npdf(z) / mpmath.mpf(0.5)), rel=1e-12)
        assert log_f == pytest.approx(float(mpmath.log(mpmath.ncdf(z))), rel=1e-12)
        assert log_1mf == pytest.approx(float(mpmath.log(mpmath.ncdf(-z))), rel=1e-12)


def test_onebit_gradient_finite_when_saturated():
    P = OneBitProblem(1, 2, [0, 0], [0, 1], 1, signs=[1.0, -1.0], link=PROBIT)
    G = grad_full(P, np.array([[-60.0, 60.0]]))
    assert np.all(np.isfinite(G))
    # Mills ratio asymptote: phi(s)/Phi(s) ~ -s for very negative s.
    assert G[0, 0] == pytest.approx(-120.0 / 0.5 / P.p, rel=1e-3)


def test_projection_leaves_feasible_rows():
    P = CompletionProblem(3, 3, [0], [0], 1, alpha=4.0, vals=[1.0])
    A = np.array([[1.0, 1.0], [0.0, 2.0], [-1.0, 0.5]])
    np.testing.assert_array_equal(project_factor(P, A), A)


def test_projection_halves_long_row():
    P = CompletionProblem(3, 3, [0], [0], 1, alpha=4.0, vals=[1.0])
    A = np.array([[0.0, 4.0], [1.0, 0.0]])
    np.testing.assert_allclose(project_factor(P, A), [[0.0, 2.0], [1.0, 0.0]])


def test_projection_identity_for_sensing(rng):
    P, _ = make_problem("sensing", Link(), 0)
    A = 100 * rng.standard_normal((5, 2))
    np.testing.assert_array_equal(project_factor(P, A), A)


def _rowwise_projection(A, radius):
    out = np.empty_like(A)
    for k, row in enumerate(A):
        norm = np.sqrt(sum(v * v for v in row))
        out[k] = row if norm <= radius else row * (radius / norm)
    return out


def test_projection_properties(rng):
    P = CompletionProblem(3, 3, [0], [0], 1, alpha=0.7, vals=[1.0])
    radius = np.sqrt(0.7)
    for _ in range(500):
        A = rng.standard_normal((6, 3)) * rng.uniform(0.1, 2)
        B = rng.standard_normal((6, 3)) * rng.uniform(0.1, 2)
        pA, pB = project_factor(P, A), project_factor(P, B)
        np.testing.assert_allclose(pA, _rowwise_projection(A, radius), rtol=1e-14)
        assert np.linalg.norm(pA - pB) <= np.linalg.norm(A - B) + 1e-12
        assert np.max(np.linalg.norm(pA, axis=1)) <= radius + 1e-12
        np.testing.assert_allclose(project_factor(P, pA), pA, rtol=0, atol=1e-15)
