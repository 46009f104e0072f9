"""Concrete stochastic optimisation problems ``min E[F(theta, X)]`` over a polytope.

The quantile problems take a ``scale`` that multiplies the whole loss.  It
leaves the minimiser unchanged; ``scale = 1 / alpha_tail`` gives the
normalised form ``theta + E[(X - theta)^+] / alpha_tail`` whose gradients are
of order one near the optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .errors import DomainError
from .is_families import FiniteSupport, StandardNormal, SymmetricExponential
from .linalg import Polytope, pseudoinverse


@dataclass(frozen=True)
class Problem:
    """A stochastic objective with its nominal sampler and stochastic gradient.

    ``grad(theta, x)`` is vectorised: ``theta`` is ``(T, s)``, ``x`` is
    ``(T, r)`` and the result ``(T, s)``.  The analytic fields are optional.
    """

    name: str
    dim: int
    theta_set: Polytope
    base: object
    grad: Callable
    objective: Optional[Callable] = None
    grad_f: Optional[Callable] = None
    theta_star: Optional[np.ndarray] = None
    hessian_star: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)

    def sample(self, rng, n):
        return self.base.sample(rng, n)

    def stochastic_gradient(self, theta, x):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.grad(theta, x)

    @property
    def active_star(self):
        """Row indices of ``theta_set`` tight at ``theta_star``."""
        if self.theta_star is None:
            raise ValueError(f"{self.name} has no known minimiser")
        mask = self.theta_set.active_mask(self.theta_star)
        return tuple(int(i) for i in np.flatnonzero(mask))


def _check_tail(alpha_tail):
    if not 0.0 < alpha_tail < 0.5:
        raise DomainError(f"alpha_tail must lie in (0, 1/2), got {alpha_tail}")


def _bisect(fun, lo, hi, tol=1e-12):
    """Root of a decreasing function on ``[lo, hi]``."""
    flo = fun(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_upper_quantile(alpha_tail):
    """``theta`` with ``P[X >= theta] = alpha_tail`` for ``X ~ N(0, 1)``."""
    return _bisect(lambda t: 0.5 * math.erfc(t / math.sqrt(2.0)) - alpha_tail, -40.0, 40.0)


def _quantile_grad(alpha_tail, scale):
    def grad(theta, x):
        return scale * (alpha_tail - (x >= theta))

    return grad


def _box(bounds):
    lo, hi = bounds
    return Polytope.box([lo], [hi])


def normal_quantile_problem(alpha_tail, box=(-10.0, 10.0), scale=1.0):
    """Upper ``alpha_tail`` quantile of ``N(0, 1)`` as ``min E[alpha theta + (X - theta)^+]``."""
    _check_tail(alpha_tail)
    a, c = float(alpha_tail), float(scale)
    theta_star = normal_upper_quantile(a)

    def objective(theta):
        t = np.asarray(theta, dtype=float)[..., 0]
        pdf = np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
        return c * (a * t + pdf - t * ndtr(-t))

    def grad_f(theta):
        t = np.asarray(theta, dtype=float)
        return c * (a - ndtr(-t))

    hess = c * math.exp(-0.5 * theta_star**2) / math.sqrt(2 * math.pi)
    return Problem(
        name="normal-quantile",
        dim=1,
        theta_set=_box(box),
        base=StandardNormal(1),
        grad=_quantile_grad(a, c),
        objective=objective,
        grad_f=grad_f,
        theta_star=np.array([theta_star]),
        hessian_star=np.array([[hess]]),
        params={"alpha_tail": a, "scale": c},
    )


def _laplace_tail(t):
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, 0.5 * np.exp(-np.abs(t)), 1.0 - 0.5 * np.exp(-np.abs(t)))


def exponential_quantile_problem(alpha_tail, box=(-20.0, 20.0), scale=1.0):
    """Upper ``alpha_tail`` quantile of the density ``exp(-|x|) / 2``.

    The tail is ``P[X >= theta] = exp(-theta) / 2`` for ``theta >= 0``.
    """
    _check_tail(alpha_tail)
    a, c = float(alpha_tail), float(scale)
    theta_star = math.log(1.0 / (2.0 * a))

    def objective(theta):
        t = np.asarray(theta, dtype=float)[..., 0]
        # E[(X - t)^+] = exp(-t)/2 for t >= 0 and -t + exp(t)/2 otherwise
        excess = np.where(t >= 0, 0.5 * np.exp(-np.abs(t)), -t + 0.5 * np.exp(-np.abs(t)))
        return c * (a * t + excess)

    def grad_f(theta):
        return c * (a - _laplace_tail(theta))

    return Problem(
        name="exponential-quantile",
        dim=1,
        theta_set=_box(box),
        base=SymmetricExponential(1),
        grad=_quantile_grad(a, c),
        objective=objective,
        grad_f=grad_f,
        theta_star=np.array([theta_star]),
        hessian_star=np.array([[c * 0.5 * math.exp(-theta_star)]]),
        params={"alpha_tail": a, "scale": c},
    )


def finite_support_quantile_problem(atoms, probs, alpha_tail, box=(-10.0, 10.0), scale=1.0):
    """Quantile loss over a finite-support law; ``theta_star`` is the upper quantile atom."""
    _check_tail(alpha_tail)
    base = FiniteSupport(atoms, probs)
    if base.dim != 1:
        raise ValueError("quantile problems are one-dimensional")
    a, c = float(alpha_tail), float(scale)
    order = np.argsort(base.atoms[:, 0])
    xs, ps = base.atoms[order, 0], base.probs[order]
    tail = np.cumsum(ps[::-1])[::-1]  # P[X >= xs[j]]
    # largest atom with P[X >= x] >= alpha: the subdifferential there contains 0
    j = int(np.flatnonzero(tail >= a)[-1])

    def grad_f(theta):
        t = np.asarray(theta, dtype=float)
        return c * (a - np.sum(base.probs * (base.atoms[:, 0] >= t[..., None]), axis=-1))

    return Problem(
        name="finite-quantile",
        dim=1,
        theta_set=_box(box),
        base=base,
        grad=_quantile_grad(a, c),
        grad_f=grad_f,
        theta_star=np.array([xs[j]]),
        params={"alpha_tail": a, "scale": c},
    )


def _qp_minimiser(H, c, K):
    """``argmin 0.5 t'Ht + c't`` over ``K`` by change of variables to a projection."""
    L = np.linalg.cholesky(H)
    Linv_T = np.linalg.inv(L).T
    Ky = Polytope(K.A @ Linv_T, K.b, dim=K.dim)
    y = Ky.project(-np.linalg.solve(L, c))
    return Linv_T @ y


def constrained_quadratic_problem(H, noise_cov, theta_set, linear=None):
    """``f(t) = 0.5 t'Ht + c't`` with ``G(t, z) = Ht + c + L z``, ``LL' = noise_cov``.

    The nominal input ``z`` is standard normal, so the additive gradient noise
    ``L z`` is ``N(0, noise_cov)``.
    """
    H = np.asarray(H, dtype=float)
    s = H.shape[0]
    if H.shape != (s, s) or not np.allclose(H, H.T):
        raise DomainError("H must be a symmetric square matrix")
    if np.min(np.linalg.eigvalsh(H)) <= 0:
        raise DomainError("H must be positive definite")
    Sigma = np.asarray(noise_cov, dtype=float)
    Lnoise = np.linalg.cholesky(Sigma)
    c = np.zeros(s) if linear is None else np.asarray(linear, dtype=float)
    if theta_set.dim != s:
        raise ValueError("theta_set dimension does not match H")
    theta_star = _qp_minimiser(H, c, theta_set)

    def grad(theta, z):
        # explicit broadcast-sum keeps each row independent of the batch size
        return (
            np.sum(theta[:, None, :] * H[None], axis=-1)
            + c
            + np.sum(z[:, None, :] * Lnoise[None], axis=-1)
        )

    return Problem(
        name="constrained-quadratic",
        dim=s,
        theta_set=theta_set,
        base=StandardNormal(s),
        grad=grad,
        objective=lambda t: 0.5 * np.einsum("...i,ij,...j->...", t, H, t) + np.asarray(t) @ c,
        grad_f=lambda t: np.asarray(t) @ H + c,
        theta_star=theta_star,
        hessian_star=H,
        params={"H": H, "noise_cov": Sigma, "linear": c},
    )


def kkt_multipliers(problem):
    """Multipliers ``lambda`` with ``-grad f(theta*) = A_a' lambda`` on the active rows."""
    rows = list(problem.active_star)
    if not rows:
        return np.zeros(0)
    A_a = problem.theta_set.A[rows]
    return pseudoinverse(A_a.T) @ (-problem.grad_f(problem.theta_star))


def random_constrained_quadratic(rng, dim=3, n_active=1, n_inactive=2, min_multiplier=1e-6):
    """Random quadratic whose minimiser sits on ``n_active`` rows with positive multipliers.

    Built backwards from a chosen ``theta*`` and multipliers so the regularity
    conditions hold by construction; the assertion guards the round trip.
    """
    M = rng.standard_normal((dim, dim))
    H = M @ M.T + dim * np.eye(dim)
    theta_star = rng.standard_normal(dim)
    A_act = rng.standard_normal((n_active, dim))
    b_act = A_act @ theta_star
    A_in = rng.standard_normal((n_inactive, dim))
    b_in = A_in @ theta_star + rng.uniform(0.5, 2.0, n_inactive)
    lam = rng.uniform(0.5, 2.0, n_active)
    c = -H @ theta_star - A_act.T @ lam
    K = Polytope(np.vstack([A_act, A_in]), np.concatenate([b_act, b_in]))
    prob = constrained_quadratic_problem(H, np.eye(dim), K, linear=c)
    mult = kkt_multipliers(prob)
    assert mult.size == n_active and np.min(mult) >= min_multiplier, mult
    return prob


def saa_quantile_baseline(samples, alpha_tail):
    """Empirical upper quantile: order statistic ``ceil((1 - alpha_tail) n)`` (1-based)."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    k = math.ceil((1.0 - alpha_tail) * n - 1e-12)
    return float(x[max(k, 1) - 1])
