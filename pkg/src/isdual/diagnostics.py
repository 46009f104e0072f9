"""Cross-trajectory statistics for comparing engines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError


def geometric_checkpoints(start, stop, ratio=1.25):
    """``ceil(start * ratio**k)`` up to ``stop`` (always included), deduplicated."""
    if start < 1 or stop < start or ratio <= 1:
        raise ValueError("need 1 <= start <= stop and ratio > 1")
    out, k = [], 0
    while True:
        n = math.ceil(start * ratio**k)
        if n >= stop:
            break
        if not out or n > out[-1]:
            out.append(n)
        k += 1
    out.append(int(stop))
    return out


def _window_averages(records, n, burn_in, which="theta"):
    return np.stack([r.window_average(n, burn_in, which) for r in records])


def scaled_error_variance(records, theta_star, checkpoints, burn_in=0):
    """Unbiased covariance across trajectories of ``sqrt(n - b) (theta_bar_n^(b) - theta*)``.

    With burn-in ``b`` the average restarts at ``b``: ``theta_bar_n^(b)`` is the
    mean of iterates ``b .. n-1``.  Returns an array ``(len(checkpoints), s, s)``.
    """
    if len(records) < 2:
        raise ValueError("at least two trajectories are needed for a variance")
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    out = []
    for n in checkpoints:
        if n <= burn_in:
            raise ValueError(f"checkpoint {n} does not exceed the burn-in {burn_in}")
        err = math.sqrt(n - burn_in) * (_window_averages(records, n, burn_in) - theta_star)
        C = np.atleast_2d(np.cov(err, rowvar=False, ddof=1))
        out.append(0.5 * (C + C.T))
    return np.stack(out)


def quantile_band(values, lo=0.1, hi=0.9):
    """Mean and ``(lo, hi)`` empirical quantiles along the trajectory axis."""
    values = np.asarray(values, dtype=float)
    return values.mean(axis=0), np.quantile(values, lo, axis=0), np.quantile(values, hi, axis=0)


def active_set_hit_time(record, K, target_rows, track="mu", tol=None):
    """First recorded ``n`` from which every ``target_rows`` stays active to the end.

    Returns ``None`` when the targets are not active at the last record.
    """
    if record.n.size == 0:
        raise ValueError("empty record")
    path = record.mu if track == "mu" else record.theta
    mask = K.active_mask(path, tol)[:, list(target_rows)]
    on = np.all(mask, axis=1)
    if not on[-1]:
        return None
    off = np.flatnonzero(~on)
    k = 0 if off.size == 0 else int(off[-1]) + 1
    return int(record.n[k])


def optimal_is_discrete(problem, theta_star=None, P=None, weight="norm"):
    """Variance-minimising proposal over the atoms of a finite-support problem.

    ``weight="norm"`` gives ``q_j ∝ |P G(theta*, x_j)| p_j``, which minimises
    ``E_q[|P G|^2 (p/q)^2]`` (Cauchy-Schwarz).  ``weight="squared-norm"`` gives
    ``q_j ∝ |P G|^2 p_j``.
    """
    base = problem.base
    if not hasattr(base, "atoms"):
        raise DomainError("the oracle needs a finite-support base law")
    theta_star = problem.theta_star if theta_star is None else np.atleast_1d(theta_star)
    if P is None:
        P = problem.theta_set.projector(problem.active_star)
    P = np.asarray(P, dtype=float)
    J = base.atoms.shape[0]
    G = problem.grad(np.broadcast_to(theta_star, (J, theta_star.size)), base.atoms)
    PG = G @ P.T
    sq = np.sum(PG * PG, axis=-1)
    return optimal_is_weights(sq, base.probs, weight)


def optimal_is_weights(sq_norms, probs, weight="squared-norm"):
    """Normalise ``w(|PG_j|^2) p_j`` over the atoms.

    ``sq_norms`` holds ``|P G(theta*, x_j)|^2``.  ``weight="norm"`` uses its
    square root, ``"squared-norm"`` uses it as given.
    """
    g = np.asarray(sq_norms, dtype=float)
    if weight == "norm":
        g = np.sqrt(g)
    elif weight != "squared-norm":
        raise ValueError(f"unknown weight {weight!r}")
    w = g * np.asarray(probs, dtype=float)
    total = w.sum()
    if not total > 0:
        raise DomainError("all projected gradients vanish; the optimal proposal is undefined")
    return w / total


def second_moment_under(problem, q, theta=None, P=None):
    """Exact ``E_q[|P G|^2 (p/q)^2]`` for a finite-support problem and proposal ``q``."""
    base = problem.base
    theta = problem.theta_star if theta is None else np.atleast_1d(theta)
    if P is None:
        P = problem.theta_set.projector(problem.active_star)
    J = base.atoms.shape[0]
    G = problem.grad(np.broadcast_to(theta, (J, theta.size)), base.atoms) @ np.asarray(P).T
    sq = np.sum(G * G, axis=-1)
    q = np.asarray(q, dtype=float)
    live = base.probs * sq > 0
    if np.any(q[live] <= 0):
        return math.inf
    return float(np.sum(sq[live] * base.probs[live] ** 2 / q[live]))


def variance_objective_samples(problem, family, theta, mu, n_samples, rng):
    """Draws of ``|P_{A(theta)} G(theta, X)|^2 l(X, mu)`` with ``X ~ P``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    family.check(mu)
    x = problem.base.sample(rng, n_samples)
    G = problem.grad(np.broadcast_to(theta, (n_samples, theta.size)), x)
    rows = tuple(int(i) for i in np.flatnonzero(problem.theta_set.active_mask(theta)))
    P = problem.theta_set.projector(rows)
    PG = G @ P.T
    lr = np.exp(family._log_lr(x, np.broadcast_to(mu, (n_samples, mu.size))))
    return np.sum(PG * PG, axis=-1) * lr


def variance_objective_estimate(problem, family, theta, mu, n_samples, rng):
    """Monte Carlo ``(mean, standard error)`` of the variance objective ``v(theta, mu)``."""
    v = variance_objective_samples(problem, family, theta, mu, n_samples, rng)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_samples))


def projected_gradient_residual(theta_bar, problem, K=None):
    """``|P_{A*} grad f(theta_bar)|`` with the active set taken at ``theta*``."""
    if problem.grad_f is None:
        raise NotImplementedError(f"{problem.name} has no analytic gradient")
    K = problem.theta_set if K is None else K
    rows = tuple(int(i) for i in np.flatnonzero(K.active_mask(problem.theta_star)))
    P = K.projector(rows)
    g = np.asarray(problem.grad_f(np.asarray(theta_bar, dtype=float)), dtype=float)
    return np.linalg.norm(g @ P.T, axis=-1)


@dataclass
class ExperimentSummary:
    """Checkpoint statistics for one engine over a set of trajectories."""

    engine: str
    trajectories: int
    checkpoints: list
    burn_in: int
    theta_mean: np.ndarray
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    theta_bar_mean: np.ndarray
    theta_bar_lo: np.ndarray
    theta_bar_hi: np.ndarray
    mu_mean: np.ndarray
    mu_lo: np.ndarray
    mu_hi: np.ndarray
    variance: Optional[np.ndarray] = None
    variance_checkpoints: list = field(default_factory=list)
    hit_times: list = field(default_factory=list)
    residual: Optional[np.ndarray] = None
    samples_per_iter: int = 1

    def variance_at(self, n):
        return self.variance[self.variance_checkpoints.index(n)]

    def band_width(self, n, track="theta"):
        k = self.checkpoints.index(n)
        lo, hi = getattr(self, f"{track}_lo"), getattr(self, f"{track}_hi")
        return hi[k] - lo[k]


def summarize(records, problem, checkpoints, burn_in=0, mu_set=None, mu_targets=None):
    """Bands, scaled-error variances, hit times and residuals for one engine."""
    checkpoints = [int(n) for n in checkpoints]
    idx = [records[0].index_of(n) for n in checkpoints]
    th = np.stack([r.theta[idx] for r in records])
    tb = np.stack([r.theta_bar[idx] for r in records])
    mu = np.stack([r.mu[idx] for r in records])
    th_m, th_lo, th_hi = quantile_band(th)
    tb_m, tb_lo, tb_hi = quantile_band(tb)
    mu_m, mu_lo, mu_hi = quantile_band(mu) if mu.shape[-1] else (mu[0],) * 3

    var, var_n = None, []
    if problem.theta_star is not None and len(records) >= 2:
        var_n = [n for n in checkpoints if n > burn_in]
        if var_n:
            var = scaled_error_variance(records, problem.theta_star, var_n, burn_in)
    hits = []
    if mu_set is not None and mu_targets is not None and mu.shape[-1]:
        hits = [active_set_hit_time(r, mu_set, mu_targets, "mu") for r in records]
    resid = None
    if problem.grad_f is not None and problem.theta_star is not None:
        resid = np.stack([projected_gradient_residual(tb[:, k], problem) for k in range(len(idx))], axis=1)
    return ExperimentSummary(
        engine=records[0].engine,
        trajectories=len(records),
        checkpoints=checkpoints,
        burn_in=burn_in,
        theta_mean=th_m, theta_lo=th_lo, theta_hi=th_hi,
        theta_bar_mean=tb_m, theta_bar_lo=tb_lo, theta_bar_hi=tb_hi,
        mu_mean=mu_m, mu_lo=mu_lo, mu_hi=mu_hi,
        variance=var,
        variance_checkpoints=var_n,
        hit_times=hits,
        residual=resid,
        samples_per_iter=records[0].samples_per_iter,
    )
