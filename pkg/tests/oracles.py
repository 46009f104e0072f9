"""Independent reference computations used only by the tests.

These deliberately take different routes from the library: null-space
bases from a full SVD instead of the pseudoinverse formula, exhaustive
enumeration of every row subset instead of the size-bounded KKT search,
and plain loops instead of vectorised expressions.
"""

from itertools import combinations

import numpy as np


def nullspace_basis(A, s):
    """Orthonormal basis of ``{x : A x = 0}`` from a full SVD."""
    A = np.asarray(A, dtype=float).reshape(-1, s)
    if A.shape[0] == 0:
        return np.eye(s)
    _, sig, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sig > 1e-10 * max(sig.max(initial=0.0), 1.0)))
    return Vt[rank:].T


def projector_from_basis(A, s):
    N = nullspace_basis(A, s)
    return N @ N.T


def brute_force_projection(z, A, b, tol=1e-9):
    """Nearest feasible point by trying every subset of rows as equalities.

    Each subset gives an affine set; the nearest point of that set is found on
    a null-space parametrisation.  The feasible candidate closest to ``z`` wins.
    """
    z = np.asarray(z, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    p, s = A.shape
    best, best_d = None, np.inf
    for k in range(p + 1):
        for S in combinations(range(p), k):
            S = list(S)
            if S:
                AS, bS = A[S], b[S]
                # particular solution of AS x = bS by least squares; skip inconsistent systems
                x_p, *_ = np.linalg.lstsq(AS, bS, rcond=None)
                if np.max(np.abs(AS @ x_p - bS)) > 1e-9:
                    continue
                N = nullspace_basis(AS, s)
                x = x_p + N @ (N.T @ (z - x_p))
            else:
                x = z.copy()
            if np.all(A @ x - b <= tol * (1 + np.abs(b))):
                d = float(np.sum((x - z) ** 2))
                if d < best_d - 1e-15:
                    best, best_d = x, d
    return best


def rank1_pinv(M):
    """Pseudoinverse of a rank-one matrix as ``v u' / sigma``."""
    M = np.asarray(M, dtype=float)
    U, sig, Vt = np.linalg.svd(M)
    return np.outer(Vt[0], U[:, 0]) / sig[0]
