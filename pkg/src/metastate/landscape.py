"""Reversible energy landscapes and their temperature-independent structure.

A landscape is a finite connected graph of states with energies ``H``,
directed transition costs ``delta`` and log-rate corrections ``r`` tied
together by ``H[x] + delta[x, y] == H[y] + delta[y, x]``.  Everything in this
module depends only on that data, never on the inverse temperature.

Heights are compared with an absolute tolerance (``EnergyLandscape.tol``,
default ``1e-9``).  All argmin/argmax style queries return full tie sets.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

REVERSIBILITY_TOL = 1e-12


class LandscapeError(ValueError):
    """Raised when a landscape or a query on it is malformed."""


class InvalidPathError(LandscapeError):
    pass


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    delta: float
    r: float


class EnergyLandscape:
    """Immutable reversible energy landscape ``(X, Q, H, delta)``.

    Parameters
    ----------
    H : sequence of float
        Energy of each state; states are ``0 .. len(H) - 1``.
    edges : mapping ``(x, y) -> (delta, r)``
        Directed transitions.  Both directions must be present.
    s : sequence of float, optional
        Entropy correction of the stationary weights, ``G = beta*H + s``.
    labels : sequence of str, optional
    check : bool
        When true (default) any invariant violation raises
        :class:`LandscapeError`.  Pass ``False`` to build a faulty landscape
        for :func:`validate` diagnostics.
    """

    def __init__(self, H, edges: Mapping[tuple[int, int], tuple[float, float]],
                 s=None, labels=None, tol: float = 1e-9, check: bool = True):
        self.H = np.asarray(H, dtype=float).copy()
        self.H.setflags(write=False)
        self.n = int(self.H.size)
        if self.n == 0:
            raise LandscapeError("landscape needs at least one state")
        self.s = None if s is None else np.asarray(s, dtype=float).copy()
        if self.s is not None:
            if self.s.shape != (self.n,):
                raise LandscapeError("s must have one entry per state")
            self.s.setflags(write=False)
        self.labels = None if labels is None else tuple(str(l) for l in labels)
        self.tol = float(tol)

        adj: list[dict[int, Edge]] = [dict() for _ in range(self.n)]
        for (x, y), (d, r) in edges.items():
            x, y = int(x), int(y)
            if not (0 <= x < self.n and 0 <= y < self.n):
                raise LandscapeError(f"edge ({x},{y}) references an unknown state")
            if x == y:
                raise LandscapeError(f"self-loop ({x},{x}) is not part of a landscape")
            if not math.isfinite(d):
                raise LandscapeError(f"edge ({x},{y}) has infinite cost; omit it instead")
            adj[x][y] = Edge(x, y, float(d), float(r))
        self._adj = tuple(dict(sorted(a.items())) for a in adj)
        self._phi_cache: dict[int, np.ndarray] = {}
        if check:
            problems = validate(self)
            if problems:
                raise LandscapeError("invalid landscape: " + "; ".join(map(str, problems)))

    # -- basic access -----------------------------------------------------
    def neighbors(self, x: int) -> Iterable[int]:
        return self._adj[x].keys()

    def edge(self, x: int, y: int) -> Edge:
        try:
            return self._adj[x][y]
        except KeyError:
            raise InvalidPathError(f"({x},{y}) is not an edge") from None

    def has_edge(self, x: int, y: int) -> bool:
        return y in self._adj[x]

    def edges(self) -> list[Edge]:
        return [e for a in self._adj for e in a.values()]

    def weight(self, x: int, y: int) -> float:
        """Level ``H(x) + delta(x, y)`` of the transition; symmetric."""
        return self.H[x] + self.edge(x, y).delta

    def label(self, x: int) -> str:
        return self.labels[x] if self.labels else str(x)

    def __repr__(self):
        return f"EnergyLandscape(n={self.n}, edges={sum(len(a) for a in self._adj)})"

    # -- constructors -----------------------------------------------------
    @classmethod
    def metropolis(cls, H, pairs: Iterable[tuple[int, int]], r: float | Mapping = math.log(2),
                   **kw) -> "EnergyLandscape":
        """Landscape with Metropolis costs ``delta(x,y) = [H(y) - H(x)]_+``.

        ``pairs`` lists undirected edges; ``r`` is a constant or a mapping on
        undirected pairs.
        """
        H = np.asarray(H, dtype=float)
        edges = {}
        for a, b in pairs:
            rr = r if not isinstance(r, Mapping) else r.get((a, b), r.get((b, a)))
            edges[(a, b)] = (max(H[b] - H[a], 0.0), rr)
            edges[(b, a)] = (max(H[a] - H[b], 0.0), rr)
        return cls(H, edges, **kw)


@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.detail}"


def validate(land: EnergyLandscape) -> list[Violation]:
    """List every violated landscape invariant; empty iff valid."""
    out: list[Violation] = []
    H = land.H
    for a in land._adj:
        for e in a.values():
            x, y = e.src, e.dst
            if e.delta < 0:
                out.append(Violation("negative-cost", (x, y), f"delta={e.delta!r}"))
            back = land._adj[y].get(x)
            if back is None:
                out.append(Violation("asymmetric-edge", (x, y), f"edge ({y},{x}) missing"))
                continue
            # each unordered pair is reported once, on its (larger, smaller) orientation
            if x > y:
                res = (H[x] + e.delta) - (H[y] + back.delta)
                if abs(res) > REVERSIBILITY_TOL:
                    out.append(Violation(
                        "reversibility", (x, y),
                        f"H({x})+delta({x},{y}) - H({y})-delta({y},{x}) = {res:.3e}"))
    seen = _component(land, 0, lambda x, y: True)
    if len(seen) != land.n:
        missing = sorted(set(range(land.n)) - seen)
        out.append(Violation("disconnected", tuple(missing[:10]),
                             f"{len(missing)} states unreachable from state 0"))
    return out


def _component(land, start, allowed, blocked=frozenset()) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in land._adj[u]:
            if v not in seen and v not in blocked and allowed(u, v):
                seen.add(v)
                queue.append(v)
    return seen


def _as_set(Y) -> frozenset[int]:
    if isinstance(Y, (int, np.integer)):
        return frozenset([int(Y)])
    return frozenset(int(y) for y in Y)


# -- heights ---------------------------------------------------------------

def path_height(land: EnergyLandscape, path: Sequence[int]) -> float:
    """Maximal transition level ``H + delta`` along ``path``."""
    if len(path) < 2:
        raise InvalidPathError("path height needs at least two states")
    return max(land.H[a] + land.edge(a, b).delta for a, b in zip(path[:-1], path[1:]))


def _minimax(land, sources, targets=None):
    """Bottleneck Dijkstra on the symmetric levels; ``phi[x] = Phi(sources, x)``."""
    best = np.full(land.n, math.inf)
    heap = []
    for s in sorted(sources):
        best[s] = land.H[s]
        heap.append((land.H[s], s))
    heapq.heapify(heap)
    done = np.zeros(land.n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if targets is not None and u in targets:
            return best, u
        Hu = land.H[u]
        for v, e in land._adj[u].items():
            nd = max(d, Hu + e.delta)
            if nd < best[v]:
                best[v] = nd
                heapq.heappush(heap, (nd, v))
    return best, None


def phi_from(land: EnergyLandscape, x: int) -> np.ndarray:
    """Communication heights ``Phi(x, y)`` for every ``y`` (cached)."""
    x = int(x)
    if x not in land._phi_cache:
        arr, _ = _minimax(land, [x])
        arr.setflags(write=False)
        land._phi_cache[x] = arr
    return land._phi_cache[x]


def comm_height(land: EnergyLandscape, Y, Z) -> float:
    """``Phi(Y, Z)``: minimal path height between the two sets."""
    Y, Z = _as_set(Y), _as_set(Z)
    if not Y or not Z:
        raise LandscapeError("communication height needs nonempty sets")
    if Y & Z:
        raise LandscapeError(f"sets overlap on {sorted(Y & Z)}")
    if len(Y) == 1:
        phi = phi_from(land, next(iter(Y)))
        return float(min(phi[z] for z in Z))
    best, hit = _minimax(land, Y, Z)
    return math.inf if hit is None else float(best[hit])


def ground_states(land: EnergyLandscape) -> frozenset[int]:
    return minima_of(land, range(land.n))


def minima_of(land: EnergyLandscape, Y) -> frozenset[int]:
    Y = _as_set(Y)
    if not Y:
        raise LandscapeError("minima of an empty set")
    m = min(land.H[y] for y in Y)
    return frozenset(y for y in Y if land.H[y] <= m + land.tol)


def external_boundary(land: EnergyLandscape, Y) -> frozenset[int]:
    Y = _as_set(Y)
    return frozenset(z for y in Y for z in land._adj[y] if z not in Y)


def stability_level(land: EnergyLandscape, x: int) -> float | None:
    """``V_x = Phi(x, I_x) - H(x)``; ``None`` for ground states."""
    lower = [y for y in range(land.n) if land.H[y] < land.H[x] - land.tol]
    if not lower:
        return None
    phi = phi_from(land, x)
    return float(min(phi[y] for y in lower) - land.H[x])


@dataclass(frozen=True)
class MetastableReport:
    gamma: float
    metastable: frozenset
    ground: frozenset
    levels: dict = field(repr=False)


def metastable_analysis(land: EnergyLandscape) -> MetastableReport:
    ground = ground_states(land)
    levels = {x: stability_level(land, x) for x in range(land.n) if x not in ground}
    if not levels:
        raise LandscapeError("every state is a ground state; no metastability")
    gamma = max(levels.values())
    meta = frozenset(x for x, v in levels.items() if v >= gamma - land.tol)
    return MetastableReport(gamma, meta, ground, levels)


# -- cycles and gates --------------------------------------------------------

@dataclass(frozen=True)
class CycleSet:
    members: frozenset
    ceiling: float

    def __contains__(self, x):
        return x in self.members

    def __len__(self):
        return len(self.members)


def cycle_below(land: EnergyLandscape, x: int, level: float) -> CycleSet:
    """States reachable from ``x`` through transitions of level below ``level``."""
    if not land.H[x] < level:
        raise LandscapeError(f"H({x})={land.H[x]} is not below the level {level}")
    H = land.H
    lim = level - land.tol
    members = _component(land, x, lambda u, v: H[u] + land._adj[u][v].delta < lim)
    return CycleSet(frozenset(members), float(level))


def is_cycle(land: EnergyLandscape, C) -> bool:
    """Singleton, or connected with every member below the boundary minimum."""
    C = _as_set(C)
    if len(C) == 1:
        return True
    start = next(iter(C))
    if _component(land, start, lambda u, v: v in C) != set(C):
        return False
    return _nontrivial(land, C)


def _nontrivial(land, C) -> bool:
    bd = external_boundary(land, C)
    if not bd:
        return True
    return max(land.H[x] for x in C) < min(land.H[z] for z in bd) - land.tol


def principal_boundary(land: EnergyLandscape, C) -> frozenset[int]:
    """Minimal-energy exits of a cycle.

    A cycle satisfying the strict ceiling inequality (singletons included)
    exits through ``F(boundary)``; a singleton ``{y}`` that fails it exits
    through every boundary state not above ``H(y)``.
    """
    members = C.members if isinstance(C, CycleSet) else _as_set(C)
    if not is_cycle(land, members):
        raise LandscapeError("not a cycle")
    bd = external_boundary(land, members)
    if not bd:
        return frozenset()
    if _nontrivial(land, members):
        return minima_of(land, bd)
    (y,) = members
    return frozenset(z for z in bd if land.H[z] <= land.H[y] + land.tol)


def _bfs_path(land, start, goal, allowed, blocked):
    parent = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u in goal:
            path = [u]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        for v in land._adj[u]:
            if v not in parent and v not in blocked and allowed(u, v):
                parent[v] = u
                queue.append(v)
    return None


def is_gate(land: EnergyLandscape, W, z: int, B) -> tuple[bool, list[int] | None]:
    """Does every optimal path from ``z`` to ``B`` cross ``W``?

    Returns ``(True, None)`` or ``(False, witness)`` where the witness is an
    optimal path avoiding ``W``.
    """
    W, B = _as_set(W), _as_set(B)
    if z in W or W & B:
        raise LandscapeError("gate candidate must be disjoint from the endpoints")
    phi = comm_height(land, {z}, B)
    lim = phi + land.tol
    H = land.H
    path = _bfs_path(land, z, B, lambda u, v: H[u] + land._adj[u][v].delta <= lim, W)
    return (path is None), path


def saddle_set(land: EnergyLandscape, z: int, B) -> frozenset[int]:
    """States at height ``Phi(z, B)`` connected to ``z`` and ``B`` below that height."""
    B = _as_set(B)
    if z in B:
        raise LandscapeError("z must lie outside B")
    phi = comm_height(land, {z}, B)
    lim = phi + land.tol
    H = land.H
    ok = lambda u, v: H[u] + land._adj[u][v].delta <= lim
    from_z = _component(land, z, ok)
    from_b: set[int] = set()
    for b in sorted(B):
        if b not in from_b:
            from_b |= _component(land, b, ok)
    return frozenset(u for u in from_z & from_b if abs(H[u] - phi) <= land.tol)


# -- series structure ----------------------------------------------------------

@dataclass
class CheckItem:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class CheckReport:
    items: list = field(default_factory=list)

    def add(self, name, passed, detail=""):
        self.items.append(CheckItem(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def failures(self):
        return [i for i in self.items if not i.passed]

    def __str__(self):
        return "\n".join(f"[{'ok' if i.passed else 'FAIL'}] {i.name} {i.detail}".rstrip()
                         for i in self.items)


def series_check(land: EnergyLandscape, x2: int, x1: int, x0: int) -> CheckReport:
    """Verify that ``x2 -> x1 -> x0`` is a series of two metastable states."""
    if len({x2, x1, x0}) != 3:
        raise LandscapeError("roles must be three distinct states")
    rep = CheckReport()
    H, tol = land.H, land.tol
    ma = metastable_analysis(land)
    g = ma.gamma
    rep.add("ground state is {x0}", ma.ground == {x0}, f"X_s={sorted(ma.ground)}")
    rep.add("metastable set is {x1,x2}", ma.metastable == {x1, x2},
            f"X_m={sorted(ma.metastable)}")
    rep.add("H(x2) > H(x1)", H[x2] > H[x1] + tol, f"{H[x2]:g} vs {H[x1]:g}")
    phi = lambda a, b: comm_height(land, a, b)
    c20 = phi(x2, x0) - H[x2]
    c10 = phi(x1, x0) - H[x1]
    c21 = phi(x2, x1) - H[x2]
    rep.add("cost x2->x0 equals Gamma_m", abs(c20 - g) <= tol, f"{c20:g} vs {g:g}")
    rep.add("cost x1->x0 equals Gamma_m", abs(c10 - g) <= tol, f"{c10:g} vs {g:g}")
    rep.add("cost x2->x1 equals Gamma_m", abs(c21 - g) <= tol, f"{c21:g} vs {g:g}")
    c02 = phi(x0, x2) - H[x0]
    c12 = phi(x1, x2) - H[x1]
    rep.add("cost x0->x2 exceeds Gamma_m", c02 > g + tol, f"{c02:g}")
    rep.add("cost x1->x2 exceeds Gamma_m", c12 > g + tol, f"{c12:g}")

    bad1 = []
    for x in range(land.n):
        if x == x1 or H[x] > H[x1] + tol:
            continue
        a = phi_from(land, x)[x0] - H[x]
        b = phi_from(land, x)[x1] - H[x1]
        if not (a < g - tol and b >= g - tol):
            bad1.append(x)
    rep.add("low states relax to x0 faster than to x1", not bad1,
            f"violations at {bad1}" if bad1 else "")
    bad2 = []
    for x in range(land.n):
        if x in (x0, x1, x2) or H[x] > H[x2] + tol:
            continue
        a = comm_height(land, {x}, {x1, x0}) - H[x]
        b = phi_from(land, x)[x2] - H[x2]
        if not (a < g - tol and b >= g - tol):
            bad2.append(x)
    rep.add("states below x2 relax to {x1,x0} faster than to x2", not bad2,
            f"violations at {bad2}" if bad2 else "")
    return rep


# -- fixtures --------------------------------------------------------------------

def toy5() -> EnergyLandscape:
    """Five states on a line, ``H = [2, 7, 1, 6, 0]``, Metropolis costs, ``r = log 2``."""
    return EnergyLandscape.metropolis([2, 7, 1, 6, 0], [(0, 1), (1, 2), (2, 3), (3, 4)])


def random_landscape(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3,
                     integer: bool = False, barrier_scale: float = 1.0) -> EnergyLandscape:
    """Random connected reversible landscape.

    Transition levels are ``max(H(x), H(y)) + b`` with a symmetric
    nonnegative barrier ``b`` (zero for half the edges), and ``r`` is the log
    of the maximal degree, so every chain built from it is sub-stochastic.
    ``integer=True`` draws integer energies and barriers to provoke ties.
    """
    if integer:
        H = rng.integers(0, 6, size=n).astype(float)
    else:
        H = rng.uniform(0.0, 5.0, size=n)
    pairs = set()
    order = rng.permutation(n)
    for i in range(1, n):
        j = int(rng.integers(0, i))
        a, b = int(order[i]), int(order[j])
        pairs.add((min(a, b), max(a, b)))
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < extra_edge_prob:
                pairs.add((a, b))
    deg = np.zeros(n, dtype=int)
    for a, b in pairs:
        deg[a] += 1
        deg[b] += 1
    r = math.log(max(int(deg.max()), 2))
    edges = {}
    for a, b in sorted(pairs):
        if rng.random() < 0.5:
            bar = 0.0
        elif integer:
            bar = float(rng.integers(0, 3))
        else:
            bar = float(rng.exponential(barrier_scale))
        level = max(H[a], H[b]) + bar
        edges[(a, b)] = (level - H[a], r)
        edges[(b, a)] = (level - H[b], r)
    return EnergyLandscape(H, edges)
