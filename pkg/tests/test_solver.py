import math

import numpy as np
import pytest
from scipy import stats

from isdual.errors import ConfigError, NonFiniteGradientError
from isdual.is_families import ExponentialTilting, MeanTranslation, StandardNormal
from isdual.linalg import Polytope
from isdual.problems import Problem, constrained_quadratic_problem, normal_quantile_problem
from isdual.solver import (
    JointState,
    StepSchedule,
    joint_nda_secondary_step,
    joint_nda_step,
    record_schedule,
    run,
)
from isdual.streams import PRIMARY, SECONDARY

SCHED = StepSchedule(0.05, 0.55)
MU_SCHED = StepSchedule(3e-6, 0.55)


def preset_problem(scale=1e4):
    return normal_quantile_problem(1e-4, (-10.0, 10.0), scale)


def tilting(lo=-1.7, hi=1.7):
    return ExponentialTilting(StandardNormal(1), Polytope.box([lo], [hi]))


def first_normal(seed, purpose):
    # streams are keyed (purpose, kind) with kind 0 for normals
    g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(purpose, 0))))
    return float(g.standard_normal())


# --- schedule ----------------------------------------------------------------


def test_schedule_values():
    s = StepSchedule(0.05, 0.55)
    assert s(1) == 0.05
    assert math.isclose(s(100), 0.05 * 100**-0.55, rel_tol=1e-15)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 0.2, 1.3])
def test_schedule_rejects_gamma(gamma):
    with pytest.raises(ConfigError):
        StepSchedule(0.1, gamma)


def test_schedule_rejects_nonpositive_alpha():
    with pytest.raises(ConfigError):
        StepSchedule(0.0, 0.7)


# --- single step against a hand computation ---------------------------------------


def test_joint_step_matches_hand_oracle():
    seed = 17
    recs = run(
        "joint-nda", preset_problem(), tilting(), SCHED, horizon=1, seed=seed,
        theta0=[7.0], mu0=[0.2], mu_schedule=MU_SCHED,
    )
    r = recs[0]
    th0, mu0, a = 7.0, 0.2, 1e-4
    x_is = mu0 + first_normal(seed, PRIMARY)
    lr = math.exp(-mu0 * x_is + 0.5 * mu0 * mu0)
    G = 1e4 * (a - (1.0 if x_is >= th0 else 0.0)) * lr
    x = first_normal(seed, SECONDARY)
    Gx = 1e4 * (a - (1.0 if x >= th0 else 0.0))
    H = Gx * Gx * (mu0 - x) * math.exp(-mu0 * x + 0.5 * mu0 * mu0)
    theta1 = min(max(th0 - 0.05 * G, -10.0), 10.0)
    mu1 = min(max(mu0 - 3e-6 * H, -1.7), 1.7)
    assert list(r.n) == [0, 1]
    assert math.isclose(r.theta[1, 0], theta1, rel_tol=1e-15, abs_tol=1e-15)
    assert math.isclose(r.mu[1, 0], mu1, rel_tol=1e-15, abs_tol=1e-15)
    assert r.theta_bar[1, 0] == 7.0 and r.mu_bar[1, 0] == 0.2


# --- equivalences ----------------------------------------------------------------


def test_frozen_mu_matches_vanilla_nda():
    prob = preset_problem()
    kw = dict(horizon=3000, seed=4, trajectories=3, theta0=[7.0], stride=1)
    a = run("joint-nda", prob, tilting(0.0, 0.0), SCHED, mu0=[0.0], mu_schedule=MU_SCHED, **kw)
    b = run("vanilla-nda", prob, None, SCHED, **kw)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.theta, rb.theta)
        assert np.array_equal(ra.theta_bar, rb.theta_bar)


def test_unconstrained_nda_matches_pr_sa():
    prob = constrained_quadratic_problem(
        np.array([[2.0, 0.3], [0.3, 1.0]]), np.eye(2), Polytope.unconstrained(2), [1.0, -0.5]
    )
    kw = dict(horizon=3000, seed=2, trajectories=3, theta0=[0.5, 0.5], stride=1)
    a = run("vanilla-nda", prob, None, SCHED, **kw)
    b = run("pr-sa", prob, None, SCHED, **kw)
    c = run("projected-sgd", prob, None, SCHED, **kw)
    for ra, rb, rc in zip(a, b, c):
        assert np.array_equal(ra.theta, rb.theta)
        assert np.array_equal(ra.theta_bar, rb.theta_bar)
        # projected SGD without constraints is the plain SGD step
        assert np.array_equal(rb.theta, rc.theta)


def test_secondary_at_zero_tilt_matches_joint():
    prob = preset_problem()
    kw = dict(horizon=2000, seed=9, trajectories=2, theta0=[7.0], mu0=[0.0], mu_schedule=MU_SCHED, stride=1)
    a = run("joint-nda", prob, tilting(0.0, 0.0), SCHED, **kw)
    b = run("joint-nda-secondary", prob, tilting(0.0, 0.0), SCHED, **kw)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.theta, rb.theta)


# --- secondary sampling ------------------------------------------------------------


def test_secondary_requires_tilting():
    fam = MeanTranslation(StandardNormal(1), Polytope.box([-1.7], [1.7]))
    with pytest.raises(ConfigError):
        run("joint-nda-secondary", preset_problem(), fam, SCHED, horizon=2, theta0=[7.0], mu0=[0.2])


def test_secondary_requires_symmetric_set():
    with pytest.raises(ConfigError):
        run("joint-nda-secondary", preset_problem(), tilting(0.0, 1.7), SCHED, horizon=2, theta0=[7.0], mu0=[0.2])


def test_secondary_weight_at_unit_tilt():
    base = StandardNormal(1)
    phi_pos, _ = base.cumulant(np.array([[1.0]]))
    phi_neg, _ = base.cumulant(np.array([[-1.0]]))
    assert math.isclose(math.exp(phi_pos[0] + phi_neg[0]), math.e, rel_tol=1e-15)


def grad_v_normal(theta, mu, a):
    """d/dmu of E[(a - 1{X >= theta})^2 exp(-mu X + mu^2/2)], X ~ N(0, 1)."""
    z = theta + mu
    v = math.exp(mu * mu) * (a * a * stats.norm.cdf(z) + (1 - a) ** 2 * stats.norm.sf(z))
    return 2 * mu * v + math.exp(mu * mu) * (a * a - (1 - a) ** 2) * stats.norm.pdf(z)


@pytest.mark.parametrize("step", [joint_nda_step, joint_nda_secondary_step])
def test_is_gradient_unbiased(step):
    # one step on a large batch: h_accum / alpha_1 holds one H draw per row
    prob = normal_quantile_problem(0.1, (-10.0, 10.0))
    fam = tilting(-1.0, 1.0)
    n = 200_000
    theta, mu = 1.0, 0.8
    st = JointState.initial(n, [theta], [mu])
    step(st, prob, fam, SCHED, np.random.default_rng(3), StepSchedule(1.0, 0.6))
    H = st.h_accum[:, 0]
    se = H.std(ddof=1) / math.sqrt(n)
    assert abs(H.mean() - grad_v_normal(theta, mu, 0.1)) <= 4 * se


# --- baselines -----------------------------------------------------------------------


def test_vanilla_nda_stays_feasible():
    recs = run("vanilla-nda", preset_problem(), None, SCHED, horizon=5000, seed=1, trajectories=4, theta0=[7.0], stride=1)
    for r in recs:
        assert np.all(np.abs(r.theta) <= 10.0)


def test_joint_records_feasible():
    recs = run("joint-nda", preset_problem(), tilting(), SCHED, horizon=5000, seed=1, trajectories=4,
               theta0=[7.0], mu0=[0.2], mu_schedule=MU_SCHED, stride=7)
    for r in recs:
        assert np.all(np.abs(r.theta) <= 10.0) and np.all(np.abs(r.mu) <= 1.7)


def test_rm_sa_with_inverse_hessian_gain():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    Sigma = np.array([[1.0, 0.2], [0.2, 0.5]])
    prob = constrained_quadratic_problem(H, Sigma, Polytope.unconstrained(2), [0.4, -0.3])
    Hinv = np.linalg.inv(H)
    recs = run("rm-sa", prob, None, StepSchedule(1.0, 0.95), horizon=100_000, seed=0, trajectories=40,
               theta0=[3.0, -3.0], gain=Hinv, record_at=(1000, 100_000))
    err = lambda n: np.mean([np.sum((r.theta[r.index_of(n)] - prob.theta_star) ** 2) for r in recs])
    assert err(100_000) < err(1000)
    # n E|e_n|^2 stays of the order of trace(H^-1 Sigma H^-1)
    limit = np.trace(Hinv @ Sigma @ Hinv)
    assert 100_000 * err(100_000) < 5 * limit


def test_rm_sa_identity_gain_is_pr_sa():
    prob = constrained_quadratic_problem(np.eye(2), np.eye(2), Polytope.unconstrained(2))
    kw = dict(horizon=500, seed=3, trajectories=2, theta0=[1.0, 1.0], stride=1)
    a = run("rm-sa", prob, None, SCHED, **kw)
    b = run("pr-sa", prob, None, SCHED, **kw)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.theta, rb.theta)


def test_projected_sgd_recentres_each_step():
    prob = preset_problem()
    recs = run("projected-sgd", prob, None, SCHED, horizon=3000, seed=5, theta0=[7.0], stride=1)
    r = recs[0]
    assert np.all(np.abs(r.theta) <= 10.0)
    # reported average is the plain mean of raw iterates
    assert math.isclose(r.theta_bar[-1, 0], r.theta[:-1, 0].mean(), rel_tol=1e-12)


# --- records and determinism ----------------------------------------------------------


def test_record_schedule_endpoints():
    keep = record_schedule(1000, stride=300, dense_tail=5, extra=(17,))
    idx = np.flatnonzero(keep)
    assert idx[0] == 0 and idx[-1] == 1000
    assert {300, 600, 900, 17, 996}.issubset(set(idx))


def test_record_strictly_increasing():
    r = run("vanilla-nda", preset_problem(), None, SCHED, horizon=777, theta0=[7.0], stride=50, dense_tail=3)[0]
    assert np.all(np.diff(r.n) > 0) and r.n[0] == 0 and r.n[-1] == 777


def test_running_average_matches_direct_sum():
    r = run("joint-nda", preset_problem(), tilting(), SCHED, horizon=10_000, seed=6, theta0=[7.0], mu0=[0.2],
            mu_schedule=MU_SCHED, stride=1)[0]
    direct = np.cumsum(r.theta[:-1, 0]) / np.arange(1, 10_001)
    assert np.max(np.abs(r.theta_bar[1:, 0] - direct)) <= 1e-12
    direct_mu = np.cumsum(r.mu[:-1, 0]) / np.arange(1, 10_001)
    assert np.max(np.abs(r.mu_bar[1:, 0] - direct_mu)) <= 1e-12


def test_window_average():
    r = run("vanilla-nda", preset_problem(), None, SCHED, horizon=2000, seed=6, theta0=[7.0], stride=1)[0]
    assert math.isclose(r.window_average(2000, 500)[0], r.theta[500:2000, 0].mean(), rel_tol=1e-12)
    with pytest.raises(KeyError):
        run("vanilla-nda", preset_problem(), None, SCHED, horizon=200, theta0=[7.0], stride=100,
            dense_tail=0)[0].index_of(150)


def test_runs_are_deterministic():
    kw = dict(horizon=2000, seed=11, trajectories=3, theta0=[7.0], mu0=[0.2], mu_schedule=MU_SCHED)
    a = run("joint-nda", preset_problem(), tilting(), SCHED, **kw)
    b = run("joint-nda", preset_problem(), tilting(), SCHED, **kw)
    for ra, rb in zip(a, b):
        for f in ("n", "theta", "mu", "theta_bar", "mu_bar", "active_theta", "active_mu"):
            assert np.array_equal(getattr(ra, f), getattr(rb, f))


def test_trajectory_independent_of_batch():
    kw = dict(horizon=6000, seed=100, theta0=[7.0], mu0=[0.2], mu_schedule=MU_SCHED)
    together = run("joint-nda", preset_problem(), tilting(), SCHED, trajectories=4, **kw)
    alone = run("joint-nda", preset_problem(), tilting(), SCHED, trajectories=1, start_index=2, **kw)
    assert alone[0].seed == together[2].seed == 102
    assert np.array_equal(alone[0].theta, together[2].theta)
    assert np.array_equal(alone[0].mu, together[2].mu)


def test_horizon_must_be_positive():
    with pytest.raises(ConfigError):
        run("vanilla-nda", preset_problem(), None, SCHED, horizon=0)


def test_unknown_engine():
    with pytest.raises(ConfigError):
        run("adam", preset_problem(), None, SCHED, horizon=5)


def test_infeasible_start_rejected():
    with pytest.raises(ConfigError):
        run("vanilla-nda", preset_problem(), None, SCHED, horizon=5, theta0=[12.0])


def test_non_finite_gradient_aborts():
    base = normal_quantile_problem(0.1)

    def grad(theta, x):
        g = base.grad(theta, x)
        return np.where(x > 2.5, np.nan, g)

    prob = Problem(name="broken", dim=1, theta_set=base.theta_set, base=base.base, grad=grad)
    with pytest.raises(NonFiniteGradientError) as info:
        run("vanilla-nda", prob, None, SCHED, horizon=10_000, seed=0, theta0=[0.0])
    err = info.value
    assert err.trajectory == 0 and err.sample[0] > 2.5 and err.iteration < 10_000
