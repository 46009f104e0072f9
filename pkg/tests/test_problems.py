import math

import numpy as np
import pytest
from scipy import stats

from isdual.errors import DomainError
from isdual.linalg import Polytope
from isdual.problems import (
    constrained_quadratic_problem,
    exponential_quantile_problem,
    finite_support_quantile_problem,
    kkt_multipliers,
    normal_quantile_problem,
    normal_upper_quantile,
    random_constrained_quadratic,
    saa_quantile_baseline,
)


def test_normal_quantile_minimiser():
    prob = normal_quantile_problem(1e-4)
    t = prob.theta_star[0]
    assert abs(t - stats.norm.isf(1e-4)) < 1e-10
    assert abs(t - 3.719) < 5e-4
    assert abs(prob.grad_f(prob.theta_star)[0]) < 1e-12
    assert abs(prob.hessian_star[0, 0] - stats.norm.pdf(t)) < 1e-15


def test_normal_upper_quantile_bisection():
    for a in (0.3, 0.05, 1e-6):
        assert abs(normal_upper_quantile(a) - stats.norm.isf(a)) < 1e-10


def test_quantile_gradient_variance_at_optimum():
    prob = normal_quantile_problem(1e-4)
    x = np.linspace(-8, 8, 4001)[:, None]
    # exact: the indicator has mean alpha, so G has variance alpha (1 - alpha)
    p = stats.norm.sf(prob.theta_star[0])
    assert abs(p * (1 - p) - 1e-4 * (1 - 1e-4)) < 1e-12
    g = prob.grad(np.full_like(x, prob.theta_star[0]), x)
    assert np.all(np.abs(g) <= 1.0)


def test_alpha_tail_domain():
    for bad in (0.0, 0.5, -0.1, 0.7):
        with pytest.raises(DomainError):
            normal_quantile_problem(bad)
        with pytest.raises(DomainError):
            exponential_quantile_problem(bad)


def test_exponential_quantile():
    prob = exponential_quantile_problem(0.05)
    t = prob.theta_star[0]
    assert abs(t - math.log(10.0)) < 1e-15
    assert abs(t - 2.302585) < 1e-6
    assert abs(0.5 * math.exp(-t) - 0.05) < 1e-15
    assert abs(stats.laplace.sf(t) - 0.05) < 1e-14
    assert abs(prob.grad_f(prob.theta_star)[0]) < 1e-15


def test_exponential_objective_matches_quadrature():
    prob = exponential_quantile_problem(0.05)
    from scipy.integrate import quad

    for t in (-1.5, 0.0, 0.7, 2.3):
        excess = quad(lambda x: (x - t) * 0.5 * math.exp(-abs(x)), t, np.inf)[0]
        assert abs(prob.objective(np.array([t])) - (0.05 * t + excess)) < 1e-9


def test_normal_objective_matches_quadrature():
    prob = normal_quantile_problem(0.1)
    from scipy.integrate import quad

    for t in (-1.0, 0.3, 2.0):
        excess = quad(lambda x: (x - t) * stats.norm.pdf(x), t, np.inf)[0]
        assert abs(prob.objective(np.array([t])) - (0.1 * t + excess)) < 1e-9


def test_scale_keeps_minimiser():
    a = normal_quantile_problem(1e-4)
    b = normal_quantile_problem(1e-4, scale=1e4)
    assert a.theta_star[0] == b.theta_star[0]
    assert b.grad(np.array([[0.0]]), np.array([[1.0]]))[0, 0] == 1e4 * (1e-4 - 1.0)


@pytest.mark.parametrize(
    "make",
    [
        lambda: normal_quantile_problem(0.1),
        lambda: exponential_quantile_problem(0.1),
        lambda: finite_support_quantile_problem([-1.0, 0.0, 2.0, 3.0], [0.4, 0.3, 0.2, 0.1], 0.15),
        lambda: constrained_quadratic_problem(
            np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([[1.0, 0.3], [0.3, 0.5]]), Polytope.unconstrained(2), [1.0, -1.0]
        ),
    ],
)
def test_gradient_is_unbiased(make):
    prob = make()
    rng = np.random.default_rng(0)
    n = 100_000
    for _ in range(10):
        theta = rng.uniform(-2, 2, prob.dim)
        x = prob.sample(rng, n)
        g = prob.grad(np.broadcast_to(theta, (n, prob.dim)), x)
        se = g.std(axis=0, ddof=1) / math.sqrt(n)
        assert np.all(np.abs(g.mean(axis=0) - prob.grad_f(theta)) <= 4 * se + 1e-12)


def test_finite_support_minimiser():
    prob = finite_support_quantile_problem([-1.0, 0.0, 2.0, 3.0], [0.4, 0.3, 0.2, 0.1], 0.15)
    t = prob.theta_star[0]
    assert t == 2.0
    # subdifferential at an atom: left and right derivatives bracket zero
    right = 0.15 - 0.1
    left = 0.15 - 0.3
    assert left <= 0 <= right


def test_quadratic_unconstrained_minimiser():
    prob = constrained_quadratic_problem(np.eye(2), np.eye(2), Polytope.unconstrained(2))
    assert np.array_equal(prob.theta_star, np.zeros(2))


def test_quadratic_halfspace_minimiser():
    K = Polytope([[-1.0, 0.0]], [-1.0])  # theta_1 >= 1
    prob = constrained_quadratic_problem(np.eye(2), np.eye(2), K)
    assert np.allclose(prob.theta_star, [1.0, 0.0], atol=1e-12)
    assert prob.active_star == (0,)
    P = K.projector(prob.active_star)
    assert np.linalg.norm(P @ prob.grad_f(prob.theta_star)) <= 1e-8
    assert np.allclose(kkt_multipliers(prob), [1.0])


def test_quadratic_rejects_non_spd():
    with pytest.raises(DomainError):
        constrained_quadratic_problem(np.array([[1.0, 0.0], [0.0, -1.0]]), np.eye(2), Polytope.unconstrained(2))


def test_quadratic_noise_covariance():
    Sigma = np.array([[1.0, 0.6], [0.6, 2.0]])
    prob = constrained_quadratic_problem(np.eye(2), Sigma, Polytope.unconstrained(2))
    rng = np.random.default_rng(1)
    x = prob.sample(rng, 200_000)
    g = prob.grad(np.zeros((200_000, 2)), x)
    assert np.allclose(np.cov(g, rowvar=False), Sigma, atol=0.03)


def test_random_quadratic_regularity():
    rng = np.random.default_rng(5)
    for _ in range(50):
        prob = random_constrained_quadratic(rng, dim=3, n_active=2, n_inactive=2)
        lam = kkt_multipliers(prob)
        assert lam.size == 2 and lam.min() >= 1e-6
        assert np.all(prob.theta_set.contains(prob.theta_star))
        P = prob.theta_set.projector(prob.active_star)
        assert np.linalg.norm(P @ prob.grad_f(prob.theta_star)) <= 1e-8


def test_saa_examples():
    assert saa_quantile_baseline(np.arange(10), 0.2) == 7.0
    assert saa_quantile_baseline([5.0], 0.3) == 5.0
    with pytest.raises(ValueError):
        saa_quantile_baseline([], 0.1)


def test_saa_consistency():
    x = np.random.default_rng(9).standard_normal(1_000_000)
    assert abs(saa_quantile_baseline(x, 0.1) - 1.2816) < 0.02
