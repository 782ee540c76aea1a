"""Rectangular droplets, their cycles, downhill paths and critical gates.

Coordinates are ``(i, j)`` with ``sigma[i, j]``.  A rectangle with corner
``x`` and sides ``l1, l2`` occupies ``i in [x_i, x_i + l1)`` and
``j in [x_j, x_j + l2)``.  The N and S sides run along ``i`` (length ``l1``),
N being the row ``j = x_j + l2``; E and W run along ``j`` (length ``l2``),
E being the column ``i = x_i + l1``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from ..asymptotics import GateWeights, gate_prefactor
from ..landscape import CheckReport
from .model import (EnergyDelta, ModelParams, SPINS, constant_config, critical_quantities,
                    flip_deltas, hamiltonian)

PHASES = ((-1, 0), (0, 1))
SIDES = ("N", "E", "S", "W")
NODE_BUDGET = 10 ** 6
PROTUBERANCE = EnergyDelta(2, -1)


class NodeBudgetExceeded(RuntimeError):
    """Exploration stopped early; ``partial`` holds what was found so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class DropletSpec:
    corner: tuple = (0, 0)
    l1: int = 2
    l2: int = 2
    n: int = 0
    side: str = "N"
    offset: int = 0
    phase: tuple = (-1, 0)

    def side_length(self) -> int:
        return self.l1 if self.side in ("N", "S") else self.l2

    def is_stripe(self, L: int) -> bool:
        return self.l1 == L or self.l2 == L

    def validate(self, L: int):
        if tuple(self.phase) not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        for l in (self.l1, self.l2):
            if not (2 <= l <= L - 1 or l == L):
                raise ValueError(f"side length {l} outside [2, L-1] and not a stripe")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        if self.n < 0 or self.offset < 0 or self.offset + self.n > self.side_length():
            raise ValueError("protuberance does not fit on the chosen side")
        if self.n and ((self.side in ("N", "S") and self.l2 == L)
                       or (self.side in ("E", "W") and self.l1 == L)):
            raise ValueError("a stripe has no boundary on that side")

    def rectangle(self) -> "DropletSpec":
        return replace(self, n=0, offset=0)


def protuberance_sites(spec: DropletSpec, L: int) -> list:
    x, y = spec.corner
    k = range(spec.offset, spec.offset + spec.n)
    if spec.side == "N":
        return [((x + t) % L, (y + spec.l2) % L) for t in k]
    if spec.side == "S":
        return [((x + t) % L, (y - 1) % L) for t in k]
    if spec.side == "E":
        return [((x + spec.l1) % L, (y + t) % L) for t in k]
    return [((x - 1) % L, (y + t) % L) for t in k]


def build_droplet(params: ModelParams, spec: DropletSpec) -> np.ndarray:
    L = params.L
    spec.validate(L)
    outer, inner = spec.phase
    sig = constant_config(params, outer)
    x, y = spec.corner
    rows = (np.arange(spec.l1) + x) % L
    cols = (np.arange(spec.l2) + y) % L
    sig[np.ix_(rows, cols)] = inner
    for i, j in protuberance_sites(spec, L):
        sig[i, j] = inner
    return sig


def _key(sig) -> bytes:
    return np.ascontiguousarray(sig, dtype=np.int8).tobytes()


def _from_key(key, L) -> np.ndarray:
    return np.frombuffer(key, dtype=np.int8).reshape(L, L).copy()


def single_protuberance_set(params: ModelParams, zeta, phase=(-1, 0)) -> list:
    """All ``S^j_inner zeta`` with ``j`` an outer site next to the droplet."""
    outer, inner = phase
    z = np.asarray(zeta)
    is_in = (z == inner).astype(np.int64)
    adj = (np.roll(is_in, 1, 0) + np.roll(is_in, -1, 0)
           + np.roll(is_in, 1, 1) + np.roll(is_in, -1, 1))
    out = []
    for i, j in zip(*np.nonzero((z == outer) & (adj > 0))):
        s = z.copy()
        s[i, j] = inner
        out.append(s)
    return out


class _Exact:
    """Vectorised exact comparison of ``a + b*h`` through ``h = p/q``."""

    def __init__(self, params):
        hf = params.h_exact
        self.p, self.q = hf.numerator, hf.denominator

    def scaled(self, a, b):
        return a * self.q + b * self.p


def _moves(sig):
    """Every single flip as arrays ``(spin_index, i, j, a, b)``."""
    a, b = flip_deltas(sig)
    cur = (np.asarray(sig, dtype=np.int64) + 1)[None]
    mask = np.arange(3)[:, None, None] != cur
    k, i, j = np.nonzero(mask)
    return k, i, j, a[k, i, j], b[k, i, j]


# -- droplet cycles -------------------------------------------------------------------

@dataclass
class DropletCycleResult:
    zeta: np.ndarray
    members: list
    energies: list
    principal_boundary: list
    boundary_energy: EnergyDelta | None
    lower_witness: list | None = None
    complete: bool = True

    @property
    def size(self) -> int:
        return len(self.members)

    def minima(self, params) -> list:
        ex = _Exact(params)
        vals = [ex.scaled(e.a, e.b) for e in self.energies]
        m = min(vals)
        return [c for c, v in zip(self.members, vals) if v == m]


def droplet_cycle(params: ModelParams, zeta, node_budget: int = NODE_BUDGET,
                  stop_below: bool = False) -> DropletCycleResult:
    """States reachable from ``zeta`` strictly below ``H(zeta) + 2 - h``.

    With ``stop_below`` the search halts at the first member with energy
    below ``H(zeta)`` and returns the path to it as ``lower_witness``.
    """
    if isinstance(zeta, DropletSpec):
        zeta = build_droplet(params, zeta)
    zeta = np.asarray(zeta, dtype=np.int8)
    L = params.L
    ex = _Exact(params)
    h0 = hamiltonian(params, zeta)
    ceiling = h0 + PROTUBERANCE
    cval = ex.scaled(ceiling.a, ceiling.b)
    base = ex.scaled(h0.a, h0.b)

    k0 = _key(zeta)
    energy = {k0: h0}
    parent = {k0: None}
    order = [k0]
    queue = deque([k0])
    best_val, best = None, {}

    def result(complete, witness=None):
        bd = [_from_key(k, L) for k in sorted(best)]
        be = None if best_val is None else next(iter(best.values()))
        return DropletCycleResult(zeta, [_from_key(k, L) for k in order],
                                  [energy[k] for k in order], bd, be, witness, complete)

    while queue:
        key = queue.popleft()
        sig = _from_key(key, L)
        e = energy[key]
        k, i, j, a, b = _moves(sig)
        na, nb = a + e.a, b + e.b
        vals = ex.scaled(na, nb)
        for t in np.flatnonzero(vals < cval):
            s = sig.copy()
            s[i[t], j[t]] = SPINS[k[t]]
            sk = _key(s)
            if sk in energy:
                continue
            energy[sk] = EnergyDelta(int(na[t]), int(nb[t]))
            parent[sk] = key
            order.append(sk)
            queue.append(sk)
            if stop_below and vals[t] < base:
                path = [sk]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                witness = [_from_key(p, L) for p in reversed(path)]
                return result(False, witness)
            if len(order) > node_budget:
                raise NodeBudgetExceeded(
                    f"cycle exploration exceeded {node_budget} configurations",
                    result(False))
        out = np.flatnonzero(vals >= cval)
        if out.size:
            m = vals[out].min()
            if best_val is None or m < best_val:
                best_val, best = m, {}
            if m == best_val:
                for t in out[vals[out] == m]:
                    s = sig.copy()
                    s[i[t], j[t]] = SPINS[k[t]]
                    sk = _key(s)
                    if sk not in energy:
                        best[sk] = EnergyDelta(int(na[t]), int(nb[t]))
    return result(True)


def _same_sets(xs, ys) -> bool:
    return sorted(_key(x) for x in xs) == sorted(_key(y) for y in ys)


def short_side_erosions(params: ModelParams, spec: DropletSpec) -> list:
    """Configurations keeping one inner spin on one of the two shortest sides."""
    L = params.L
    spec.validate(L)
    outer, _ = spec.phase
    zeta = build_droplet(params, spec.rectangle())
    x, y = spec.corner
    out = []
    if spec.l1 <= spec.l2:
        rows = [(spec.l2 - 1), 0]  # the two sides of length l1, at fixed j
        for jj in rows:
            for keep in range(spec.l1):
                s = zeta.copy()
                for t in range(spec.l1):
                    if t != keep:
                        s[(x + t) % L, (y + jj) % L] = outer
                out.append(s)
    if spec.l2 <= spec.l1:
        for ii in (spec.l1 - 1, 0):
            for keep in range(spec.l2):
                s = zeta.copy()
                for t in range(spec.l2):
                    if t != keep:
                        s[(x + ii) % L, (y + t) % L] = outer
                out.append(s)
    return out


def droplet_cycle_report(params: ModelParams, spec: DropletSpec,
                         node_budget: int = NODE_BUDGET) -> tuple[DropletCycleResult, CheckReport]:
    """Explore the cycle of a rectangle or stripe and check its boundary structure."""
    spec = spec.rectangle()
    zeta = build_droplet(params, spec)
    lc = critical_quantities(params).lc
    rep = CheckReport()
    rett1 = {spec.l1, spec.l2} == {lc - 1, lc + 1} and not spec.is_stripe(params.L)
    res = droplet_cycle(params, zeta, node_budget, stop_below=rett1)
    if res.lower_witness is not None:
        low = hamiltonian(params, res.lower_witness[-1]) - hamiltonian(params, zeta)
        rep.add("bottom of the cycle is zeta", False,
                f"a configuration {len(res.lower_witness) - 1} flips away has "
                f"H - H(zeta) = {low} < 0 below the ceiling")
        if rett1:
            rep.add("principal boundary is the short-side erosion set", False,
                    "the claimed boundary configurations lie inside the cycle")
        return res, rep
    ex = _Exact(params)
    top = max(ex.scaled(e.a, e.b) for e in res.energies)
    be = res.boundary_energy
    rep.add("cycle inequality max H(A) < H(F(boundary))",
            be is None or top < ex.scaled(be.a, be.b))
    mins = res.minima(params)
    rep.add("bottom of the cycle is zeta", len(mins) == 1 and _key(mins[0]) == _key(zeta),
            f"{len(mins)} minimiser(s)")
    if min(spec.l1, spec.l2) >= lc or spec.is_stripe(params.L):
        expect = single_protuberance_set(params, zeta, spec.phase)
        rep.add("principal boundary is the single-protuberance set",
                _same_sets(res.principal_boundary, expect),
                f"{len(res.principal_boundary)} found, {len(expect)} expected")
    if rett1:
        expect = short_side_erosions(params, spec)
        rep.add("principal boundary is the short-side erosion set",
                _same_sets(res.principal_boundary, expect))
    return res, rep


# -- strict downhill paths ---------------------------------------------------------------

@dataclass
class DownhillReport:
    paths: list
    labels: list
    counts: dict = field(default_factory=dict)

    @property
    def other(self) -> list:
        return [p for p, l in zip(self.paths, self.labels) if l == "other"]


def strict_downhill_enumeration(params: ModelParams, spec: DropletSpec,
                                node_budget: int = NODE_BUDGET) -> DownhillReport:
    """Enumerate every strictly decreasing single-flip path from a droplet with
    a unit protuberance down to a local minimum, and classify it."""
    if spec.n != 1:
        raise ValueError("start configuration must carry a protuberance of length one")
    L = params.L
    outer, inner = spec.phase
    sigma0 = build_droplet(params, spec)
    base = _key(build_droplet(params, spec.rectangle()))
    full = replace(spec, n=spec.side_length(), offset=0)
    grown = _key(build_droplet(params, full))
    row = set(protuberance_sites(full, L))
    (prot,) = protuberance_sites(spec, L)
    ex = _Exact(params)

    paths, labels = [], []
    visited = [0]

    def classify(flips, end):
        if len(flips) == 1 and flips[0] == (prot, outer) and end == base:
            return "shrinking"
        if end == grown and all(site in row and s == inner for site, s in flips):
            return "growing"
        return "other"

    stack = [(sigma0, [])]
    while stack:
        sig, flips = stack.pop()
        visited[0] += 1
        if visited[0] > node_budget:
            raise NodeBudgetExceeded("downhill enumeration exceeded the node budget",
                                     DownhillReport(paths, labels))
        k, i, j, a, b = _moves(sig)
        down = np.flatnonzero(ex.scaled(a, b) < 0)
        if down.size == 0:
            if flips:
                paths.append(flips)
                labels.append(classify(flips, _key(sig)))
            continue
        for t in down[::-1]:
            s = sig.copy()
            s[i[t], j[t]] = SPINS[k[t]]
            stack.append((s, flips + [((int(i[t]), int(j[t])), SPINS[k[t]])]))
    counts = {c: labels.count(c) for c in ("growing", "shrinking", "other")}
    return DownhillReport(paths, labels, counts)


# -- critical gate ---------------------------------------------------------------------

def critical_droplets(params: ModelParams, phase=(-1, 0)) -> list:
    """All critical configurations: an ``lc x (lc-1)`` rectangle, either
    orientation, with a unit protuberance anywhere on a longest side."""
    lc = critical_quantities(params).lc
    L = params.L
    if lc + 1 > L - 1:
        raise ValueError("lattice too small for the critical droplet")
    seen = {}
    for l1, l2, sides in ((lc, lc - 1, ("N", "S")), (lc - 1, lc, ("E", "W"))):
        for x in range(L):
            for y in range(L):
                for side in sides:
                    for off in range(lc):
                        spec = DropletSpec((x, y), l1, l2, 1, side, off, tuple(phase))
                        s = build_droplet(params, spec)
                        seen.setdefault(_key(s), s)
    return list(seen.values())


@dataclass
class GateEnumeration:
    k: Fraction
    n_configs: int
    n_corner: int
    n_interior: int
    weights: GateWeights
    escapes: list
    energy_offset: set


def gate_prefactor_enumeration(params: ModelParams, phase=(-1, 0)) -> GateEnumeration:
    """Count the one-step exits of every critical configuration.

    Each downhill move is accepted with probability one, so its weight is
    the proposal probability ``q = 1/(2|Lambda|)``.  Moves that remove inner
    spin lead back towards the outer phase, moves that add inner spin lead
    across; any other non-uphill move is reported as an escape.
    """
    outer, inner = phase
    q = Fraction(1, 2 * params.n_sites)
    ex = _Exact(params)
    ref = hamiltonian(params, constant_config(params, outer))
    pc, hh, escapes, offsets = {}, {}, [], set()
    n_corner = n_interior = 0
    configs = critical_droplets(params, phase)
    for idx, sig in enumerate(configs):
        offsets.add(hamiltonian(params, sig) - ref)
        k, i, j, a, b = _moves(sig)
        v = ex.scaled(a, b)
        back = across = 0
        for t in np.flatnonzero(v <= 0):
            old, new = int(sig[i[t], j[t]]), SPINS[k[t]]
            if v[t] < 0 and old == inner and new == outer:
                back += 1
            elif v[t] < 0 and old == outer and new == inner:
                across += 1
            else:
                escapes.append((idx, (int(i[t]), int(j[t])), new))
        pc[idx], hh[idx] = back * q, across * q
        if across == 1:
            n_corner += 1
        elif across == 2:
            n_interior += 1
    weights = GateWeights(pc, hh)
    return GateEnumeration(gate_prefactor(weights), len(configs), n_corner, n_interior,
                           weights, escapes, offsets)
