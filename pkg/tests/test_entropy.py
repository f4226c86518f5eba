import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from attention_transport.entropy import (MaxEntProblem, entropy_functional, expfam_log_density,
                                         expfam_member, expfam_project, kl, kl_weights,
                                         maxent_solve, maxent_verify, smoothed_contract,
                                         smoothed_projection_experiment, theta_grid_check)
from attention_transport.errors import (DegenerateGrid, Infeasible, SampleBudgetTooSmall,
                                        SupportMismatch)
from attention_transport.measures import DiscreteMeasure, dirac, empirical

from oracles import kl_scalar, logit, sigmoid

TWO = [[0.0], [1.0]]


def test_kl_examples():
    u = empirical(TWO)
    mu = DiscreteMeasure(TWO, [0.75, 0.25])
    assert kl(u, u) == 0.0
    assert kl(mu, u) == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-15)
    assert kl(mu, u) == pytest.approx(0.130812, abs=1e-6)
    assert kl(DiscreteMeasure(TWO, [1, 0]), DiscreteMeasure(TWO, [0, 1])) == math.inf


def test_entropy_examples():
    u = empirical(TWO)
    assert entropy_functional(u, u) == 0.0
    assert entropy_functional(DiscreteMeasure(TWO, [0.75, 0.25]), u) == pytest.approx(-0.130812, abs=1e-6)
    assert entropy_functional(DiscreteMeasure(TWO, [1, 0]), DiscreteMeasure(TWO, [0, 1])) == -math.inf


def test_kl_needs_common_support():
    with pytest.raises(SupportMismatch):
        kl(empirical(TWO), empirical([[0.0], [2.0]]))


@given(arrays(float, 6, elements=st.floats(0, 1)).filter(lambda a: a.sum() > 0.01),
       arrays(float, 6, elements=st.floats(0.001, 1)))
def test_kl_nonnegative_and_matches_scalar(p, q):
    p, q = p / p.sum(), q / q.sum()
    val = kl_weights(p, q)
    assert val >= -1e-15
    assert val == pytest.approx(kl_scalar(p, q), abs=1e-12)
    assert kl_weights(q, q) == 0.0


def test_maxent_unconstrained_target():
    nu = DiscreteMeasure([[0.0], [1.0], [3.0]], [0.2, 0.5, 0.3])
    K = [[0.0, 1.0, 3.0]]
    res = maxent_solve(MaxEntProblem(nu, K, [0.5 + 0.9]))
    assert res.iterations == 0 and res.lam.tolist() == [0.0]
    np.testing.assert_allclose(res.solution.weights, nu.weights, atol=1e-15)


def test_maxent_logit():
    res = maxent_solve(MaxEntProblem(empirical(TWO), [[0.0, 1.0]], [0.731059]))
    assert res.lam[0] == pytest.approx(logit(0.731059), abs=1e-9)
    exact = maxent_solve(MaxEntProblem(empirical(TWO), [[0.0, 1.0]], [sigmoid(1.0)]))
    assert exact.lam[0] == pytest.approx(1.0, abs=1e-6)


def test_maxent_symmetric():
    res = maxent_solve(MaxEntProblem(empirical([[-1.0], [0.0], [1.0]]), [[-1.0, 0.0, 1.0]], [0.0]))
    assert res.lam.tolist() == [0.0]
    np.testing.assert_allclose(res.solution.weights, [1 / 3] * 3, atol=1e-15)


def test_maxent_infeasible_targets():
    with pytest.raises(Infeasible):
        maxent_solve(MaxEntProblem(empirical(TWO), [[0.0, 1.0]], [1.0]))
    with pytest.raises(Infeasible):
        maxent_solve(MaxEntProblem(empirical(TWO), [[0.0, 1.0]], [2.0]))


def test_maxent_singular_hessian_is_flagged():
    # second feature duplicates the first
    res = maxent_solve(MaxEntProblem(empirical([[0.0], [1.0], [2.0]]), [[0, 1, 2], [0, 1, 2]], [1.3, 1.3]))
    assert res.converged and res.regularized


def test_maxent_verify_examples():
    nu = DiscreteMeasure([[0.0], [1.0], [2.0], [5.0]], [0.1, 0.2, 0.3, 0.4])
    prob = MaxEntProblem(nu, [[0.0, 1.0, 2.0, 5.0]], [2.9])
    ver = maxent_verify(prob, nu, 300, seed=1)
    assert ver.holds and ver.worst_gap <= 0
    prob = MaxEntProblem(empirical(TWO), [[0.0, 1.0]], [0.731059])
    sol = maxent_solve(prob).solution
    ver = maxent_verify(prob, sol, 500, seed=2)
    assert ver.holds and ver.worst_gap <= 1e-12 and ver.identity_error <= 1e-9


@st.composite
def maxent_problems(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    N = int(rng.integers(3, 12))
    l = int(rng.integers(1, min(3, N - 1) + 1))
    base = DiscreteMeasure(rng.normal(size=(N, 1)), rng.dirichlet(np.ones(N)))
    K = rng.normal(size=(l, N))
    return MaxEntProblem(base, K, K @ rng.dirichlet(np.ones(N)))


@given(maxent_problems())
def test_maxent_properties(prob):
    res = maxent_solve(prob)
    assert res.converged and res.grad_norm <= 1e-10
    s = res.lam @ prob.features
    g = prob.base.weights * np.exp(s - s.max())
    np.testing.assert_allclose(g / g.sum(), res.solution.weights, rtol=0, atol=1e-12)
    vals = res.dual_values
    assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(vals, vals[1:]))
    ver = maxent_verify(prob, res.solution, 100, seed=0)
    assert ver.holds and ver.identity_error <= 1e-9


def _grid(d, n):
    return np.array(list(itertools.product(np.arange(n, dtype=float), repeat=d)))


def test_expfam_examples():
    grid = _grid(2, 3)
    theta0 = np.array([0.4, -1.1])
    proj = expfam_project(expfam_member(grid, theta0), grid)
    np.testing.assert_allclose(proj.theta, theta0, atol=1e-8)
    assert np.abs(expfam_project(empirical(grid), grid).theta).max() <= 1e-12
    two = expfam_project(DiscreteMeasure(TWO, [0.268941, 0.731059]), TWO)
    assert two.theta[0] == pytest.approx(logit(0.731059), abs=1e-9)
    assert two.theta[0] == pytest.approx(1.0, abs=1e-5)


def test_expfam_errors():
    with pytest.raises(DegenerateGrid):
        expfam_project(empirical([[0.0, 0.0], [1.0, 1.0]]), [[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(SupportMismatch):
        expfam_project(dirac([0.5]), TWO)


@given(st.integers(0, 2**31 - 1), st.integers(1, 2))
def test_expfam_grid_check_and_pythagoras(seed, d):
    rng = np.random.default_rng(seed)
    grid = _grid(d, 4)
    mu = DiscreteMeasure(grid, rng.dirichlet(np.ones(len(grid))))
    proj = expfam_project(mu, grid)
    gap, count = theta_grid_check(mu, grid, proj.theta, seed=seed)
    assert gap >= -1e-9 and count >= 41
    theta = rng.normal(size=d)
    p_star = np.exp(expfam_log_density(grid, proj.theta))
    p_theta = np.exp(expfam_log_density(grid, theta))
    lhs = kl_weights(mu.weights, p_theta) - kl_weights(mu.weights, p_star)
    assert lhs == pytest.approx(kl_weights(p_star, p_theta), abs=1e-9)


def test_smoothed_dirac():
    est = smoothed_projection_experiment(dirac([0.7, -0.2]), [1.0, 0.5], 10_000, seed=1)
    for e in est:
        np.testing.assert_allclose(e.argmin_estimate, [0.7, -0.2], atol=3 * e.stderr + 1e-9)


def test_smoothed_symmetric_measure():
    mu = empirical([[2.0], [4.0]])
    est = smoothed_projection_experiment(mu, [1.0, 0.5, 0.25], 20_000, seed=4)
    assert all(e.distance_to_mean <= 3 * e.stderr for e in est)
    assert smoothed_contract(est, 0.05)


def test_smoothed_budget_and_sigmas():
    with pytest.raises(SampleBudgetTooSmall):
        smoothed_projection_experiment(dirac([0.0]), [1.0], 9_999, seed=0)
    with pytest.raises(ValueError):
        smoothed_projection_experiment(dirac([0.0]), [0.5, 1.0], 10_000, seed=0)
