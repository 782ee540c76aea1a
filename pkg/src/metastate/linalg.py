"""Subtraction-free linear solves for absorbing Markov chains.

Low-temperature chains have holding probabilities within machine epsilon of
one, so ``I - P`` computed naively loses every significant digit.  The
systems here are written in generator form ``(D - W) x = b`` where ``W`` holds
the off-diagonal transition probabilities and ``D`` the total exit
probability of each row, and solved by Grassmann-Taksar-Heyman style state
elimination.  With ``W >= 0`` and ``b >= 0`` no subtraction ever occurs, so
every entry of the solution carries full relative precision.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 2500


def _as_index(interior, n):
    idx = np.asarray(sorted(set(int(i) for i in interior)), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise IndexError("interior index out of range")
    return idx


def gth_solve(W, interior, rhs):
    """Solve ``(D - W)[I, I] x = rhs`` on the interior set ``I``.

    ``W`` is the dense matrix of off-diagonal transition probabilities (its
    diagonal is ignored).  ``D[i]`` is the total probability of leaving
    ``i``, including jumps out of the interior.  ``rhs`` must be
    nonnegative; returns the solution indexed like ``interior`` (sorted).
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    idx = _as_index(interior, n)
    m = idx.size
    b = np.array(rhs, dtype=float, copy=True)
    if b.shape != (m,):
        raise ValueError(f"rhs has shape {b.shape}, expected ({m},)")
    if np.any(b < 0):
        raise ValueError("rhs must be nonnegative for subtraction-free elimination")
    if m == 0:
        return b

    outside = np.ones(n, dtype=bool)
    outside[idx] = False
    A = W[np.ix_(idx, idx)].copy()
    np.fill_diagonal(A, 0.0)
    exit_mass = W[np.ix_(idx, np.flatnonzero(outside))].sum(axis=1)
    diag = np.empty(m)

    for k in range(m):
        d = A[k, k + 1:].sum() + exit_mass[k]
        if not d > 0.0:
            raise np.linalg.LinAlgError(
                f"state {int(idx[k])} cannot leave its class; system is singular"
            )
        diag[k] = d
        if k + 1 == m:
            break
        f = A[k + 1:, k] / d
        nz = np.flatnonzero(f)
        if nz.size == 0:
            continue
        rows = k + 1 + nz
        A[np.ix_(rows, np.arange(k + 1, m))] += np.outer(f[nz], A[k, k + 1:])
        exit_mass[rows] += f[nz] * exit_mass[k]
        b[rows] += f[nz] * b[k]

    x = np.empty(m)
    for k in range(m - 1, -1, -1):
        x[k] = (b[k] + A[k, k + 1:] @ x[k + 1:]) / diag[k]
    return x


def sparse_solve(P, interior, rhs, weights=None, rtol: float = 1e-13):
    """Same system as :func:`gth_solve` for large sparse chains.

    With stationary ``weights`` the system is symmetrised as
    ``diag(w) (D - W)`` and solved by preconditioned conjugate gradients,
    which avoids the fill-in of a direct factorisation on high-dimensional
    state graphs.  Without weights, or if CG stalls, a sparse LU is used.
    Accurate at moderate inverse temperatures; it does not carry the
    entrywise guarantee of the elimination above.
    """
    P = sp.csr_matrix(P)
    n = P.shape[0]
    idx = _as_index(interior, n)
    off = P - sp.diags(P.diagonal())
    off.eliminate_zeros()
    out_rate = np.asarray(off.sum(axis=1)).ravel()
    sub = off[idx][:, idx]
    L = (sp.diags(out_rate[idx]) - sub).tocsr()
    b = np.asarray(rhs, dtype=float)
    if weights is not None:
        w = np.asarray(weights, dtype=float)[idx]
        S = (sp.diags(w) @ L).tocsr()
        S = (S + S.T) * 0.5
        pre = sp.diags(1.0 / S.diagonal())
        x, info = spla.cg(S, w * b, rtol=rtol, atol=0.0, maxiter=50 * idx.size, M=pre)
        if info == 0:
            return x
    return spla.spsolve(L.tocsc(), b)


def solve_absorbing(P, interior, rhs, weights=None):
    """Dispatch to the dense elimination or the sparse solver by size."""
    n = P.shape[0]
    if n <= DENSE_LIMIT:
        dense = P.toarray() if sp.issparse(P) else np.asarray(P, dtype=float)
        return gth_solve(dense, interior, rhs)
    return sparse_solve(P, interior, rhs, weights)


def stationary_gth(P):
    """Stationary distribution of an irreducible dense chain by GTH reduction."""
    A = np.array(P.toarray() if sp.issparse(P) else P, dtype=float, copy=True)
    n = A.shape[0]
    np.fill_diagonal(A, 0.0)
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()
