"""Dense linear algebra and polytope machinery.

Everything here is sized for small problems: a handful of variables and at
most a dozen constraint rows.  The proximal step of dual averaging is the
Euclidean projection of ``x0 - g_sum`` onto ``{x : A x <= b}``, solved by
enumerating candidate active subsets and certifying the KKT conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import InfeasibleError

RANK_TOL = 1e-12
FEAS_TOL = 1e-9


def _as_finite(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def pseudoinverse(M, rank_tol=RANK_TOL):
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values below ``rank_tol * sigma_max`` are treated as zero.
    """
    M = _as_finite(M)
    if M.ndim != 2:
        raise ValueError("pseudoinverse expects a 2-D array")
    if M.size == 0:
        return np.zeros((M.shape[1], M.shape[0]))
    U, sig, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = rank_tol * sig[0] if sig.size else 0.0
    inv = np.zeros_like(sig)
    keep = sig > cutoff
    inv[keep] = 1.0 / sig[keep]
    return (Vt.T * inv) @ U.T


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector ``P`` onto the null space of some active rows."""

    P: np.ndarray

    def apply(self, v):
        return np.asarray(v) @ self.P.T

    def __array__(self, dtype=None, copy=None):
        return self.P if dtype is None else self.P.astype(dtype)


def projector_onto_nullspace(A_active, dim=None):
    """Return ``I - A^T (A A^T)^+ A`` for the rows of ``A_active``.

    ``dim`` is only needed when ``A_active`` has no rows and no column count.
    """
    A = _as_finite(A_active, "A_active")
    if A.ndim == 1:
        A = A.reshape(0, dim) if A.size == 0 else A[None, :]
    s = A.shape[1] if dim is None else dim
    if A.shape[0] == 0:
        return Projector(np.eye(s))
    # I - A'(AA')^+ A is I - V_r V_r' for the leading right singular vectors of A;
    # working on A rather than AA' avoids squaring its condition number
    _, sig, Vt = np.linalg.svd(A, full_matrices=False)
    keep = sig**2 > RANK_TOL * sig[0] ** 2 if sig.size and sig[0] > 0 else np.zeros(sig.shape, bool)
    V = Vt[keep]
    P = np.eye(s) - V.T @ V
    return Projector(0.5 * (P + P.T))


@dataclass(frozen=True)
class ActiveSet:
    indices: tuple
    tol: np.ndarray

    def __len__(self):
        return len(self.indices)

    def __contains__(self, i):
        return i in self.indices


class Polytope:
    """The set ``{x in R^s : A x <= b}``.

    Rows that each touch a single coordinate are recognised as a box and
    projected by clipping.  Anything else goes through the exact
    subset-enumeration solver, whose cost is ``O(sum_{k<=s} C(p, k))``
    equality-constrained solves (bounded by ``2^p``); keep ``p`` at a dozen
    rows or fewer.
    """

    def __init__(self, A, b, names=None, dim=None):
        A = _as_finite(A, "A")
        b = _as_finite(b, "b").reshape(-1)
        if A.size == 0:
            if dim is None:
                dim = A.shape[1] if A.ndim == 2 else None
            if not dim:
                raise ValueError("an empty polytope needs an explicit dim")
            A = np.zeros((0, dim))
        if A.ndim == 1:
            A = A[None, :]
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]}")
        if A.shape[1] < 1:
            raise ValueError("dimension must be at least 1")
        if names is not None and len(names) != A.shape[0]:
            raise ValueError("names must match the number of rows")
        self.A = A
        self.b = b
        self.names = list(names) if names is not None else None
        self._subset_cache = {}
        self._projector_cache = {}
        self._detect_box()
        # feasibility witness: the prox step with zero gradient
        self.witness = self.project(np.zeros(self.dim))

    @classmethod
    def box(cls, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        lower, upper = np.broadcast_arrays(lower, upper)
        s = lower.size
        rows, rhs, names = [], [], []
        for i in range(s):
            if np.isfinite(upper[i]):
                rows.append(np.eye(s)[i])
                rhs.append(upper[i])
                names.append(f"x{i}<=")
            if np.isfinite(lower[i]):
                rows.append(-np.eye(s)[i])
                rhs.append(-lower[i])
                names.append(f"x{i}>=")
        A = np.array(rows) if rows else np.zeros((0, s))
        return cls(A, np.array(rhs), names=names, dim=s)

    @classmethod
    def unconstrained(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    @classmethod
    def simplex(cls, m):
        """``{mu >= 0, sum(mu) = 1}`` written as inequalities."""
        A = np.vstack([np.ones(m), -np.ones(m), -np.eye(m)])
        b = np.concatenate([[1.0, -1.0], np.zeros(m)])
        names = ["sum<=1", "sum>=1"] + [f"mu{i}>=0" for i in range(m)]
        return cls(A, b, names=names)

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def n_rows(self):
        return self.A.shape[0]

    @property
    def is_box(self):
        return self._box is not None

    def _detect_box(self):
        self._box = None
        nz = self.A != 0
        if self.n_rows and not np.all(nz.sum(axis=1) == 1):
            return
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for i in range(self.n_rows):
            j = int(np.flatnonzero(nz[i])[0])
            bound = self.b[i] / self.A[i, j]
            if self.A[i, j] > 0:
                hi[j] = min(hi[j], bound)
            else:
                lo[j] = max(lo[j], bound)
        if np.any(lo > hi):
            raise InfeasibleError(f"empty box: lower {lo} exceeds upper {hi}")
        self._box = (lo, hi)

    @property
    def bounds(self):
        """``(lower, upper)`` per coordinate when the polytope is a box."""
        if self._box is None:
            raise ValueError("polytope is not a box")
        return self._box

    def row_tol(self, tol=None):
        if tol is None:
            return FEAS_TOL * (1.0 + np.abs(self.b))
        return np.broadcast_to(np.asarray(tol, dtype=float), self.b.shape)

    def row_values(self, x):
        """``A x`` over leading axes of ``x``, each row summed independently."""
        x = np.asarray(x, dtype=float)
        return np.sum(x[..., None, :] * self.A, axis=-1)

    def contains(self, x, tol=None):
        return np.all(self.row_values(x) - self.b <= self.row_tol(tol), axis=-1)

    def active_mask(self, x, tol=None):
        """Boolean mask of tight rows, broadcast over leading axes of ``x``."""
        return np.abs(self.row_values(x) - self.b) <= self.row_tol(tol)

    def project(self, z):
        """Euclidean projection onto the polytope; ``z`` may be batched."""
        z = np.asarray(z, dtype=float)
        if self.n_rows == 0:
            return z.copy()
        if self._box is not None:
            lo, hi = self._box
            return np.minimum(np.maximum(z, lo), hi)
        if z.ndim == 1:
            return self._project_one(z)
        flat = z.reshape(-1, self.dim)
        out = np.empty_like(flat)
        for t in range(flat.shape[0]):
            out[t] = self._project_one(flat[t])
        return out.reshape(z.shape)

    def _subset(self, S):
        hit = self._subset_cache.get(S)
        if hit is None:
            AS = self.A[list(S)]
            hit = (AS, self.b[list(S)], pseudoinverse(AS @ AS.T))
            self._subset_cache[S] = hit
        return hit

    def _project_one(self, z):
        tol = self.row_tol()
        if np.all(self.A @ z - self.b <= tol):
            return z.copy()
        p, s = self.n_rows, self.dim
        # Caratheodory: some linearly independent subset of at most s rows
        # carries nonnegative multipliers, so larger subsets are never needed.
        for k in range(1, min(p, s) + 1):
            for S in combinations(range(p), k):
                AS, bS, G = self._subset(S)
                lam = G @ (AS @ z - bS)
                scale = 1.0 + np.max(np.abs(lam))
                if np.any(lam < -RANK_TOL * 1e3 * scale):
                    continue
                x = z - AS.T @ lam
                if np.any(np.abs(AS @ x - bS) > tol[list(S)]):
                    continue
                if np.any(self.A @ x - self.b > tol):
                    continue
                return x
        raise InfeasibleError("no feasible point satisfies the KKT conditions")

    def projector(self, active_rows):
        """Cached null-space projector for a tuple of active row indices."""
        key = tuple(active_rows)
        P = self._projector_cache.get(key)
        if P is None:
            P = projector_onto_nullspace(self.A[list(key)], dim=self.dim).P
            self._projector_cache[key] = P
        return P

    def mirrored(self):
        return Polytope(-self.A, self.b, dim=self.dim)

    def is_symmetric(self, tol=1e-12):
        """True when the row set of ``(-A, b)`` matches that of ``(A, b)``."""
        rows = np.hstack([self.A, self.b[:, None]])
        flipped = np.hstack([-self.A, self.b[:, None]])
        return all(np.any(np.all(np.abs(rows - r) <= tol, axis=1)) for r in flipped)

    def __repr__(self):
        if self._box is not None:
            return f"Polytope.box({self._box[0].tolist()}, {self._box[1].tolist()})"
        return f"Polytope(p={self.n_rows}, s={self.dim})"


def dual_average_step(g_sum, x0, K):
    """Minimise ``<g_sum, x> + |x - x0|^2 / 2`` over ``K``.

    Completing the square turns this into the projection of ``x0 - g_sum``.
    """
    g_sum = np.asarray(g_sum, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if g_sum.shape[-1] != K.dim or x0.shape[-1] != K.dim:
        raise ValueError("dimension mismatch between gradient sum, centre and K")
    return K.project(x0 - g_sum)


def active_set(x, K, tol=None):
    """Rows of ``K`` with ``|A_i x - b_i| <= tol`` (default ``1e-9 (1 + |b_i|)``)."""
    x = _as_finite(x, "x")
    t = K.row_tol(tol)
    mask = np.abs(K.A @ x - K.b) <= t
    return ActiveSet(tuple(int(i) for i in np.flatnonzero(mask)), np.array(t))


def kkt_residual(x, z, K, active=None):
    """Largest violation of the projection KKT system at ``x`` for target ``z``.

    Multipliers are recovered by least squares on the active rows.
    """
    x = np.asarray(x, dtype=float)
    rows = list(active_set(x, K).indices) if active is None else list(active)
    primal = max(0.0, float(np.max(K.A @ x - K.b, initial=0.0)))
    if not rows:
        return max(primal, float(np.max(np.abs(x - z))))
    AS = K.A[rows]
    lam = pseudoinverse(AS.T) @ (z - x)
    stat = float(np.max(np.abs(x - z + AS.T @ lam)))
    dual = max(0.0, float(-np.min(lam)))
    return max(primal, stat, dual)
