"""Independent brute-force oracles shared by the test modules."""

import math

import mpmath
import numpy as np


def simple_path_heights(land, x):
    """Minimal height over all simple paths from ``x`` to every state (DFS)."""
    best = np.full(land.n, math.inf)
    best[x] = land.H[x]
    on = [False] * land.n
    on[x] = True

    def dfs(u, h):
        for v in land.neighbors(u):
            if on[v]:
                continue
            hv = max(h, land.H[u] + land.edge(u, v).delta)
            best[v] = min(best[v], hv)
            on[v] = True
            dfs(v, hv)
            on[v] = False

    dfs(x, land.H[x])
    return best


def all_simple_paths(land, z, B):
    B = set(B)
    out, path = [], [z]

    def dfs(u):
        if u in B:
            out.append(list(path))
            return
        for v in land.neighbors(u):
            if v not in path:
                path.append(v)
                dfs(v)
                path.pop()

    dfs(z)
    return out


def path_level(land, p):
    return max(land.H[a] + land.edge(a, b).delta for a, b in zip(p[:-1], p[1:]))


def brute_phi(land):
    return np.array([simple_path_heights(land, x) for x in range(land.n)])


def brute_stability(land, phi, tol=1e-9):
    out = {}
    for x in range(land.n):
        lower = [y for y in range(land.n) if land.H[y] < land.H[x] - tol]
        out[x] = None if not lower else min(phi[x, y] for y in lower) - land.H[x]
    return out


def brute_saddles(land, phi, z, B, tol=1e-9):
    """States at height Phi(z,B) joined to z and to B by paths not above it."""
    level = min(phi[z, b] for b in B)
    return frozenset(u for u in range(land.n)
                     if abs(land.H[u] - level) <= tol and phi[z, u] <= level + tol
                     and min(phi[u, b] for b in B) <= level + tol)


def brute_gate(land, W, z, B, tol=1e-9):
    paths = all_simple_paths(land, z, B)
    level = min(path_level(land, p) for p in paths)
    return all(set(p) & set(W) for p in paths if path_level(land, p) <= level + tol)


def dense_hitting_times(P, A):
    """``E_x[tau_A]`` by a plain dense solve of ``(I - P) t = 1`` off ``A``."""
    n = P.shape[0]
    out = np.zeros(n)
    rest = [x for x in range(n) if x not in set(A)]
    M = np.eye(len(rest)) - P[np.ix_(rest, rest)]
    out[rest] = np.linalg.solve(M, np.ones(len(rest)))
    return out


def dense_potential(P, Y, Z):
    n = P.shape[0]
    h = np.zeros(n)
    h[list(Y)] = 1.0
    rest = [x for x in range(n) if x not in set(Y) | set(Z)]
    M = np.eye(len(rest)) - P[np.ix_(rest, rest)]
    rhs = P[np.ix_(rest, list(Y))].sum(axis=1)
    h[rest] = np.linalg.solve(M, rhs)
    return h


def hp_hitting_times(P, A, dps=40):
    """``E_x[tau_A]`` from a 40-digit dense solve of the generator system."""
    n = P.shape[0]
    rest = [x for x in range(n) if x not in set(A)]
    with mpmath.workdps(dps):
        W = [[mpmath.mpf(float(P[i, j])) if i != j else mpmath.mpf(0) for j in range(n)]
             for i in range(n)]
        M = mpmath.matrix(len(rest), len(rest))
        for a, i in enumerate(rest):
            M[a, a] = mpmath.fsum(W[i])
            for c, j in enumerate(rest):
                if i != j:
                    M[a, c] -= W[i][j]
        x = mpmath.lu_solve(M, mpmath.matrix([1] * len(rest)))
        out = np.zeros(n)
        out[rest] = [float(v) for v in x]
    return out
