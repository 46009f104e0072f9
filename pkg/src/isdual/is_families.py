"""Parametric importance-sampling families.

Each family exposes a sampler for ``P_mu``, the likelihood ratio
``l(x, mu) = dP/dP_mu (x)`` and its gradient in ``mu``.  All methods are
vectorised: ``x`` has shape ``(T, r)`` and ``mu`` shape ``(T, m)``; 1-D
inputs are treated as a single point and give unbatched outputs.
Likelihood ratios are assembled in log space and exponentiated last.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .linalg import Polytope

LN2 = float(np.log(2.0))


def _batch(a):
    a = np.asarray(a, dtype=float)
    if a.ndim <= 1:
        return np.atleast_1d(a)[None, :], True
    return a, False


def _unbatch(a, single):
    return a[0] if single else a


# --------------------------------------------------------------------------
# base laws


class BaseDistribution:
    """Nominal law ``P`` of the random input."""

    kind = "base"
    dim = 1

    def sample(self, rng, n):
        raise NotImplementedError

    def cumulant(self, mu):
        """``(phi(mu), grad phi(mu))`` for batched ``mu``."""
        raise DomainError(f"{self.kind} has no cumulant-generating function here")

    def sample_tilted(self, mu, rng):
        raise DomainError(f"exponential tilting is not available for {self.kind}")

    # for mean translation: Delta = -log density and its gradient
    def neg_log_density(self, x):
        raise DomainError(f"{self.kind} has no Lebesgue density")

    def neg_log_density_grad(self, x):
        raise DomainError(f"{self.kind} has no Lebesgue density")


class StandardNormal(BaseDistribution):
    kind = "standard-normal"

    def __init__(self, dim=1):
        self.dim = int(dim)

    def sample(self, rng, n):
        return rng.standard_normal((n, self.dim))

    def cumulant(self, mu):
        return 0.5 * np.sum(mu * mu, axis=-1), mu

    def sample_tilted(self, mu, rng):
        return mu + rng.standard_normal(mu.shape)

    def neg_log_density(self, x):
        return 0.5 * np.sum(x * x, axis=-1) + 0.5 * self.dim * np.log(2 * np.pi)

    def neg_log_density_grad(self, x):
        return x

    def __repr__(self):
        return f"StandardNormal(dim={self.dim})"


class SymmetricExponential(BaseDistribution):
    """Independent coordinates with density ``exp(-|x|) / 2``."""

    kind = "symmetric-exponential"

    def __init__(self, dim=1):
        self.dim = int(dim)

    def sample(self, rng, n):
        e = rng.standard_exponential((n, self.dim))
        u = rng.random((n, self.dim))
        return np.where(u < 0.5, -e, e)

    def cumulant(self, mu):
        if np.any(np.abs(mu) >= 1.0):
            raise DomainError("cumulant of exp(-|x|)/2 diverges for |mu| >= 1")
        return -np.sum(np.log1p(-mu * mu), axis=-1), 2.0 * mu / (1.0 - mu * mu)

    def sample_tilted(self, mu, rng):
        # tilted law is asymmetric Laplace: rate 1-mu on the right, 1+mu on the left
        if np.any(np.abs(mu) >= 1.0):
            raise DomainError("exponential tilt of exp(-|x|)/2 needs |mu| < 1")
        e = rng.standard_exponential(mu.shape)
        u = rng.random(mu.shape)
        right = u < 0.5 * (1.0 + mu)
        return np.where(right, e / (1.0 - mu), -e / (1.0 + mu))

    def neg_log_density(self, x):
        return np.sum(np.abs(x), axis=-1) + self.dim * LN2

    def neg_log_density_grad(self, x):
        # subgradient 0 at the kink
        return np.sign(x)

    def __repr__(self):
        return f"SymmetricExponential(dim={self.dim})"


class FiniteSupport(BaseDistribution):
    """Atoms ``x_j`` (rows of ``atoms``) with probabilities ``p_j``."""

    kind = "finite-support"

    def __init__(self, atoms, probs):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (atoms.shape[0],):
            raise ValueError("one probability per atom is required")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be positive and sum to 1")
        self.atoms = atoms
        self.probs = probs
        self.log_probs = np.log(probs)
        self.dim = atoms.shape[1]

    def _pick(self, logw, u):
        w = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
        c = np.cumsum(w, axis=-1)[:, :-1]
        idx = np.sum(u >= c, axis=-1)
        return self.atoms[idx]

    def sample(self, rng, n):
        u = rng.random((n, 1))
        return self._pick(np.broadcast_to(self.log_probs, (n, self.probs.size)), u)

    def cumulant(self, mu):
        logw = self.log_probs + mu @ self.atoms.T
        phi = logsumexp(logw, axis=-1)
        w = np.exp(logw - phi[..., None])
        return phi, w @ self.atoms

    def tilted_probs(self, mu):
        mu, single = _batch(mu)
        logw = self.log_probs + mu @ self.atoms.T
        return _unbatch(np.exp(logw - logsumexp(logw, axis=-1, keepdims=True)), single)

    def sample_tilted(self, mu, rng):
        u = rng.random((mu.shape[0], 1))
        return self._pick(self.log_probs + mu @ self.atoms.T, u)

    def __repr__(self):
        return f"FiniteSupport(n_atoms={self.probs.size}, dim={self.dim})"


def cumulant(base, mu):
    """Cumulant-generating function of ``base`` and its gradient at ``mu``."""
    m, single = _batch(mu)
    phi, grad = base.cumulant(m)
    return _unbatch(phi, single), _unbatch(grad, single)


# --------------------------------------------------------------------------
# families


class ISFamily:
    """A parametric family ``{P_mu : mu in M}`` of proposals for ``base``."""

    kind = "family"

    def __init__(self, base, M):
        self.base = base
        self.M = M

    @property
    def dim_mu(self):
        return self.M.dim

    def check(self, mu):
        if not np.all(self.M.contains(mu)):
            raise DomainError(f"IS parameter outside its domain: {mu!r}")

    def sample(self, mu, rng, check=True):
        m, single = _batch(mu)
        if check:
            self.check(m)
        return _unbatch(self._sample(m, rng), single)

    def log_likelihood_ratio(self, x, mu):
        xb, single = _batch(x)
        m, _ = _batch(mu)
        return _unbatch(self._log_lr(xb, m), single)

    def likelihood_ratio(self, x, mu):
        return np.exp(self.log_likelihood_ratio(x, mu))

    def likelihood_ratio_grad(self, x, mu):
        xb, single = _batch(x)
        m, _ = _batch(mu)
        return _unbatch(self._lr_grad(xb, m), single)

    def _sample(self, mu, rng):
        raise NotImplementedError

    def _log_lr(self, x, mu):
        raise NotImplementedError

    def _lr_grad(self, x, mu):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.base!r}, {self.M!r})"


class ExponentialTilting(ISFamily):
    """``l(x, mu) = exp(-mu.x + phi(mu))`` with ``phi`` the base cumulant."""

    kind = "exponential-tilting"

    def __init__(self, base, M):
        if M.dim != base.dim:
            raise ValueError("tilting parameter must match the sample dimension")
        super().__init__(base, M)

    def _sample(self, mu, rng):
        return self.base.sample_tilted(mu, rng)

    def _log_lr(self, x, mu):
        phi, _ = self.base.cumulant(mu)
        return phi - np.sum(mu * x, axis=-1)

    def _lr_grad(self, x, mu):
        phi, dphi = self.base.cumulant(mu)
        lr = np.exp(phi - np.sum(mu * x, axis=-1))
        return (dphi - x) * lr[:, None]


class MeanTranslation(ISFamily):
    """Shifted densities ``p(x - mu)`` of a log-concave base.

    ``l(x, mu) = exp(-(Delta(x) - Delta(x - mu)))`` with ``Delta = -log p``.
    """

    kind = "mean-translation"

    def __init__(self, base, M):
        if isinstance(base, FiniteSupport):
            raise DomainError("mean translation needs a base with a Lebesgue density")
        if M.dim != base.dim:
            raise ValueError("translation must match the sample dimension")
        super().__init__(base, M)

    def _sample(self, mu, rng):
        return self.base.sample(rng, mu.shape[0]) + mu

    def _log_lr(self, x, mu):
        return self.base.neg_log_density(x - mu) - self.base.neg_log_density(x)

    def _lr_grad(self, x, mu):
        lr = np.exp(self._log_lr(x, mu))
        return -self.base.neg_log_density_grad(x - mu) * lr[:, None]


class Mixture(ISFamily):
    """Mixtures ``sum_i mu_i P_i`` of fixed proposals on the simplex.

    ``components`` is a list of ``(family, mu_i)`` pairs; component ``i`` is
    ``P_i = family.P_{mu_i}`` with likelihood ratio ``l_i``.  The mixture
    ratio is the weighted harmonic mean ``(sum_i mu_i / l_i)^-1``.
    """

    kind = "mixture"

    def __init__(self, components, M=None):
        if not components:
            raise ValueError("a mixture needs at least one component")
        base = components[0][0].base
        self.components = [(fam, np.atleast_1d(np.asarray(p, dtype=float))) for fam, p in components]
        for fam, _ in self.components:
            if fam.base.dim != base.dim:
                raise ValueError("mixture components must share the sample space")
        super().__init__(base, M if M is not None else Polytope.simplex(len(components)))
        if self.M.dim != len(components):
            raise ValueError("mixture parameter has one weight per component")

    def component_log_lr(self, x):
        """``log l_i(x)`` stacked as columns, shape ``(T, I)``."""
        T = x.shape[0]
        return np.stack(
            [fam._log_lr(x, np.broadcast_to(p, (T, p.size))) for fam, p in self.components],
            axis=-1,
        )

    def _sample(self, mu, rng):
        T = mu.shape[0]
        # every component is drawn so the stream consumption is fixed per step
        draws = [fam._sample(np.broadcast_to(p, (T, p.size)), rng) for fam, p in self.components]
        u = rng.random((T, 1))
        w = np.maximum(mu, 0.0)
        c = np.cumsum(w, axis=-1)[:, :-1] / np.sum(w, axis=-1, keepdims=True)
        idx = np.sum(u >= c, axis=-1)
        return np.stack(draws, axis=1)[np.arange(T), idx]

    def _log_lr(self, x, mu):
        w = np.maximum(mu, 0.0)
        return -logsumexp(-self.component_log_lr(x), b=w, axis=-1)

    def _lr_grad(self, x, mu):
        log_li = self.component_log_lr(x)
        log_l = -logsumexp(-log_li, b=np.maximum(mu, 0.0), axis=-1)
        return -np.exp(2.0 * log_l[:, None] - log_li)


def sample(family, mu, rng):
    return family.sample(mu, rng)


def likelihood_ratio(family, x, mu):
    return family.likelihood_ratio(x, mu)


def likelihood_ratio_grad(family, x, mu):
    return family.likelihood_ratio_grad(x, mu)
