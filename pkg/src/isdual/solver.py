"""Iteration engines: joint dual averaging with adaptive importance sampling and baselines.

All engines advance a *batch* of independent trajectories in lock-step.
Each trajectory draws from its own seeded streams (see :mod:`isdual.streams`),
so a trajectory's path does not depend on the batch it runs in.

Dual averaging is carried in its "dual point" form: ``z_n = x0 - sum_k a_{k+1} G_k``
and ``x_n = proj_K(z_n)``, which is the minimiser of
``<sum a G, x> + |x - x0|^2 / 2`` over ``K``.  Keeping ``z`` as a running
difference makes the unconstrained case reproduce Polyak-Ruppert SA exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, NonFiniteGradientError
from .is_families import ExponentialTilting
from .streams import PRIMARY, SECONDARY, VariateStream, trajectory_seeds


@dataclass(frozen=True)
class StepSchedule:
    """``alpha_n = alpha0 * n ** -gamma`` for ``n >= 1``."""

    alpha0: float
    gamma: float

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ConfigError(f"alpha0 must be positive, got {self.alpha0}")
        if not 0.5 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in the open interval (1/2, 1), got {self.gamma}")

    def __call__(self, n):
        return self.alpha0 * float(n) ** -self.gamma


class Streams(NamedTuple):
    """Independent streams for the decision-gradient sample and the IS-gradient sample."""

    primary: object
    secondary: object

    @classmethod
    def for_seeds(cls, seeds, chunk=4096):
        return cls(VariateStream(seeds, PRIMARY, chunk), VariateStream(seeds, SECONDARY, chunk))


def _split(rng):
    if isinstance(rng, Streams):
        return rng
    return Streams(rng, rng)


@dataclass
class JointState:
    """Batched iterate state; arrays have a leading trajectory axis."""

    theta: np.ndarray
    mu: np.ndarray
    z_theta: np.ndarray
    z_mu: np.ndarray
    theta_center: np.ndarray
    mu_center: np.ndarray
    theta_sum: np.ndarray
    mu_sum: np.ndarray
    n: int = 0
    samples: int = 0

    @classmethod
    def initial(cls, batch, theta0, mu0=(), theta_center=None, mu_center=None):
        theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
        tc = theta0 if theta_center is None else np.atleast_1d(np.asarray(theta_center, dtype=float))
        mc = mu0 if mu_center is None else np.atleast_1d(np.asarray(mu_center, dtype=float))
        rep = lambda v: np.tile(v, (batch, 1))
        # the first prox step uses z_0 = centre, so the initial iterate may differ from it
        return cls(
            theta=rep(theta0), mu=rep(mu0), z_theta=rep(tc), z_mu=rep(mc),
            theta_center=tc, mu_center=mc,
            theta_sum=np.zeros((batch, theta0.size)), mu_sum=np.zeros((batch, mu0.size)),
        )

    @property
    def batch(self):
        return self.theta.shape[0]

    @property
    def g_accum(self):
        return self.theta_center - self.z_theta

    @property
    def h_accum(self):
        return self.mu_center - self.z_mu

    @property
    def theta_bar(self):
        return self.theta.copy() if self.n == 0 else self.theta_sum / self.n

    @property
    def mu_bar(self):
        return self.mu.copy() if self.n == 0 else self.mu_sum / self.n


def projected_sq_norm(K, theta, G, tol=None):
    """``|P_{A_a(theta)} G|^2`` per trajectory, with the active set taken at ``theta``."""
    if K.n_rows == 0:
        return np.sum(G * G, axis=-1)
    mask = K.active_mask(theta, tol)
    if K.is_box:
        touched = np.any(mask[:, :, None] & (K.A != 0)[None], axis=1)
        PG = np.where(touched, 0.0, G)
        return np.sum(PG * PG, axis=-1)
    out = np.empty(G.shape[0])
    patterns, inverse = np.unique(mask, axis=0, return_inverse=True)
    for k, pat in enumerate(patterns):
        idx = np.flatnonzero(inverse.reshape(-1) == k)
        P = K.projector(tuple(np.flatnonzero(pat)))
        PG = np.sum(G[idx, None, :] * P[None], axis=-1)
        out[idx] = np.sum(PG * PG, axis=-1)
    return out


def _check_finite(state, G, H, x, mu):
    bad = ~np.all(np.isfinite(G), axis=-1)
    if H is not None:
        bad |= ~np.all(np.isfinite(H), axis=-1)
    if np.any(bad):
        t = int(np.flatnonzero(bad)[0])
        raise NonFiniteGradientError(state.n, t, x[t].tolist(), mu[t].tolist())


def _advance(state, G, H, theta_set, mu_set, schedule, mu_schedule):
    k = state.n + 1
    state.theta_sum += state.theta
    state.z_theta -= schedule(k) * G
    state.theta = theta_set.project(state.z_theta)
    if H is not None:
        state.mu_sum += state.mu
        state.z_mu -= mu_schedule(k) * H
        state.mu = mu_set.project(state.z_mu)
    state.n = k


def joint_nda_step(state, problem, family, schedule, rng, mu_schedule=None, check=True):
    """One joint step: decision gradient from ``P_mu``, IS gradient from ``P``.

    ``G_n = G(theta_n, X^(mu_n)) l(X^(mu_n), mu_n)`` and
    ``H_n = |P G(theta_n, X)|^2 grad_mu l(X, mu_n)`` with ``X ~ P`` drawn
    independently.  The state is updated in place and returned.
    """
    rg, rh = _split(rng)
    theta, mu = state.theta, state.mu
    x_is = family._sample(mu, rg)
    G = problem.grad(theta, x_is) * np.exp(family._log_lr(x_is, mu))[:, None]
    x = problem.base.sample(rh, state.batch)
    sq = projected_sq_norm(problem.theta_set, theta, problem.grad(theta, x))
    H = sq[:, None] * family._lr_grad(x, mu)
    if check:
        _check_finite(state, G, H, x_is, mu)
    _advance(state, G, H, problem.theta_set, family.M, schedule, mu_schedule or schedule)
    state.samples += 2
    return state


def check_secondary_family(family):
    if not isinstance(family, ExponentialTilting):
        raise ConfigError("secondary sampling with nu = -mu needs an exponential-tilting family")
    if not family.M.is_symmetric():
        raise ConfigError("secondary sampling with nu = -mu needs a symmetric parameter set M = -M")


def joint_nda_secondary_step(state, problem, family, schedule, rng, mu_schedule=None, check=True):
    """Joint step whose IS gradient is itself importance sampled at ``nu = -mu``.

    ``H = (grad phi(mu) - X) |P G(theta, X)|^2 exp(phi(mu) + phi(-mu))`` with
    ``X ~ P_{-mu}``.
    """
    rg, rh = _split(rng)
    theta, mu = state.theta, state.mu
    x_is = family._sample(mu, rg)
    G = problem.grad(theta, x_is) * np.exp(family._log_lr(x_is, mu))[:, None]
    x = family._sample(-mu, rh)
    phi, dphi = family.base.cumulant(mu)
    phi_neg, _ = family.base.cumulant(-mu)
    sq = projected_sq_norm(problem.theta_set, theta, problem.grad(theta, x))
    H = (dphi - x) * (sq * np.exp(phi + phi_neg))[:, None]
    if check:
        _check_finite(state, G, H, x_is, mu)
    _advance(state, G, H, problem.theta_set, family.M, schedule, mu_schedule or schedule)
    state.samples += 2
    return state


def _nominal_gradient(state, problem, rng):
    rg, _ = _split(rng)
    x = problem.base.sample(rg, state.batch)
    return problem.grad(state.theta, x), x


def vanilla_nda_step(state, problem, schedule, rng, check=True):
    G, x = _nominal_gradient(state, problem, rng)
    if check:
        _check_finite(state, G, None, x, state.mu)
    _advance(state, G, None, problem.theta_set, None, schedule, None)
    state.samples += 1
    return state


def pr_sa_step(state, problem, schedule, rng, check=True):
    """Unprojected SA step; the running average is kept in the state."""
    G, x = _nominal_gradient(state, problem, rng)
    return _unprojected_step(state, G, x, schedule, check)


def rm_sa_step(state, problem, schedule, rng, gain=None, check=True):
    """Robbins-Monro step ``theta - a K G`` with gain matrix ``K`` (identity by default)."""
    G, x = _nominal_gradient(state, problem, rng)
    if gain is not None:
        G = np.sum(G[:, None, :] * np.asarray(gain, dtype=float)[None], axis=-1)
    return _unprojected_step(state, G, x, schedule, check)


def _unprojected_step(state, G, x, schedule, check):
    if check:
        _check_finite(state, G, None, x, state.mu)
    k = state.n + 1
    state.theta_sum += state.theta
    state.z_theta -= schedule(k) * G
    state.theta = state.z_theta.copy()
    state.n = k
    state.samples += 1
    return state


def projected_sgd_step(state, problem, schedule, rng, check=True):
    """``theta <- proj(theta - a G)``: the prox step recentred at the current iterate."""
    G, x = _nominal_gradient(state, problem, rng)
    if check:
        _check_finite(state, G, None, x, state.mu)
    k = state.n + 1
    state.theta_sum += state.theta
    state.theta = problem.theta_set.project(state.theta - schedule(k) * G)
    state.z_theta = state.theta.copy()
    state.n = k
    state.samples += 1
    return state


ENGINES = (
    "joint-nda",
    "joint-nda-secondary",
    "vanilla-nda",
    "projected-sgd",
    "pr-sa",
    "rm-sa",
)
USES_FAMILY = {"joint-nda", "joint-nda-secondary"}
SAMPLES_PER_ITER = {e: (2 if e in USES_FAMILY else 1) for e in ENGINES}


def make_stepper(engine, problem, family, schedule, mu_schedule=None, gain=None, check=True):
    """Bind an engine name to a ``step(state, rng)`` callable."""
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; choose from {', '.join(ENGINES)}")
    if engine in USES_FAMILY and family is None:
        raise ConfigError(f"engine {engine!r} needs an IS family")
    if engine == "joint-nda":
        return lambda st, rng: joint_nda_step(st, problem, family, schedule, rng, mu_schedule, check)
    if engine == "joint-nda-secondary":
        check_secondary_family(family)
        return lambda st, rng: joint_nda_secondary_step(st, problem, family, schedule, rng, mu_schedule, check)
    if engine == "vanilla-nda":
        return lambda st, rng: vanilla_nda_step(st, problem, schedule, rng, check)
    if engine == "projected-sgd":
        return lambda st, rng: projected_sgd_step(st, problem, schedule, rng, check)
    if engine == "pr-sa":
        return lambda st, rng: pr_sa_step(st, problem, schedule, rng, check)
    return lambda st, rng: rm_sa_step(st, problem, schedule, rng, gain, check)


@dataclass
class TrajectoryRecord:
    """Thinned history of one trajectory; row ``k`` describes iteration ``n[k]``."""

    engine: str
    traj: int
    seed: int
    n: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    theta_bar: np.ndarray
    mu_bar: np.ndarray
    active_theta: np.ndarray
    active_mu: np.ndarray
    stride: int
    samples_per_iter: int

    def index_of(self, n):
        k = int(np.searchsorted(self.n, n))
        if k >= self.n.size or self.n[k] != n:
            raise KeyError(f"iteration {n} was not recorded")
        return k

    def window_average(self, n, burn_in=0, which="theta"):
        """Average of iterates ``burn_in .. n-1``; both ends must be recorded."""
        bar = self.theta_bar if which == "theta" else self.mu_bar
        k = self.index_of(n)
        if burn_in == 0:
            return bar[k]
        if not 0 <= burn_in < n:
            raise ValueError(f"burn-in {burn_in} must be below checkpoint {n}")
        kb = self.index_of(burn_in)
        return (n * bar[k] - burn_in * bar[kb]) / (n - burn_in)

    @property
    def horizon(self):
        return int(self.n[-1])


def record_schedule(horizon, stride=100, dense_tail=1000, extra=()):
    """Iterations to record: every ``stride``-th, a dense tail, the ends and ``extra``."""
    keep = np.zeros(horizon + 1, dtype=bool)
    keep[:: max(int(stride), 1)] = True
    keep[max(horizon - int(dense_tail), 0):] = True
    keep[0] = keep[horizon] = True
    for e in extra:
        if 0 <= int(e) <= horizon:
            keep[int(e)] = True
    return keep


def run(
    engine,
    problem,
    family=None,
    schedule=None,
    horizon=1000,
    seed=0,
    trajectories=1,
    start_index=0,
    theta0=None,
    mu0=None,
    theta_center=None,
    mu_center=None,
    mu_schedule=None,
    stride=100,
    dense_tail=1000,
    record_at=(),
    gain=None,
    check=True,
):
    """Run ``trajectories`` independent paths of ``engine`` for ``horizon`` steps.

    Trajectory ``i`` (counting from ``start_index``) uses seed ``seed + i``.
    Returns one :class:`TrajectoryRecord` per trajectory; identical arguments
    give identical records.
    """
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if schedule is None:
        raise ConfigError("a step schedule is required")
    seeds = trajectory_seeds(seed, trajectories, start_index)
    uses_mu = engine in USES_FAMILY
    if theta0 is None:
        theta0 = problem.theta_set.witness
    if uses_mu and mu0 is None:
        mu0 = family.M.witness
    state = JointState.initial(
        trajectories, theta0, mu0 if uses_mu else (), theta_center, mu_center if uses_mu else None
    )
    if not np.all(problem.theta_set.contains(state.theta)):
        raise ConfigError("theta0 lies outside the feasible set")
    if uses_mu and not np.all(family.M.contains(state.mu)):
        raise ConfigError("mu0 lies outside the IS parameter set")
    step = make_stepper(engine, problem, family, schedule, mu_schedule, gain, check)
    rng = Streams.for_seeds(seeds)

    keep = record_schedule(horizon, stride, dense_tail, record_at)
    K = int(keep.sum())
    T, s, m = trajectories, state.theta.shape[1], state.mu.shape[1]
    p_th = problem.theta_set.n_rows
    p_mu = family.M.n_rows if uses_mu else 0
    out = {
        "n": np.flatnonzero(keep),
        "theta": np.empty((K, T, s)),
        "mu": np.empty((K, T, m)),
        "theta_bar": np.empty((K, T, s)),
        "mu_bar": np.empty((K, T, m)),
        "active_theta": np.empty((K, T, p_th), dtype=bool),
        "active_mu": np.empty((K, T, p_mu), dtype=bool),
    }

    def snapshot(k):
        out["theta"][k] = state.theta
        out["mu"][k] = state.mu
        out["theta_bar"][k] = state.theta_bar
        out["mu_bar"][k] = state.mu_bar
        out["active_theta"][k] = problem.theta_set.active_mask(state.theta)
        if uses_mu:
            out["active_mu"][k] = family.M.active_mask(state.mu)

    k = 0
    for n in range(horizon):
        if keep[n]:
            snapshot(k)
            k += 1
        step(state, rng)
    snapshot(k)

    return [
        TrajectoryRecord(
            engine=engine,
            traj=start_index + t,
            seed=seeds[t],
            n=out["n"],
            theta=out["theta"][:, t],
            mu=out["mu"][:, t],
            theta_bar=out["theta_bar"][:, t],
            mu_bar=out["mu_bar"][:, t],
            active_theta=out["active_theta"][:, t],
            active_mu=out["active_mu"][:, t],
            stride=int(stride),
            samples_per_iter=SAMPLES_PER_ITER[engine],
        )
        for t in range(T)
    ]
