"""Metropolis dynamics of the Blume-Capel model and the exit-time experiment.

Proposals pick a uniform site and one of its two alternative spins, i.e.
``q = 1/(2|Lambda|)``.  Time is counted in proposals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from ..asymptotics import fit_exponential
from ..montecarlo import (HittingSample, SimConfig, chunk_sizes, estimate_mean_exit,
                          estimate_probability, parallel_map, stream)
from .model import ModelParams, constant_config, critical_quantities

A_OFF, B_OFF = 20, 2
LABELS = ("d", "0", "u")
_ALTS = np.array([[0, 1], [-1, 1], [-1, 0]], dtype=np.int8)


def acceptance_table(params: ModelParams, beta: float) -> np.ndarray:
    """``min(1, exp(-beta (a + b h)))`` indexed by ``(a + 20, b + 2)``."""
    a = np.arange(-A_OFF, A_OFF + 1)[:, None]
    b = np.arange(-B_OFF, B_OFF + 1)[None, :]
    return np.minimum(1.0, np.exp(-beta * (a + b * float(params.h))))


def neighbor_table(L: int) -> np.ndarray:
    idx = np.arange(L * L).reshape(L, L)
    return np.stack([np.roll(idx, s, ax).ravel() for ax in (0, 1) for s in (1, -1)], axis=1)


@numba.njit(nogil=True, cache=True)
def _bc_run(sig, nbr, alts, acc, props, us, counts, target):
    N = sig.size
    for k in range(props.size):
        p = props[k]
        site = p >> 1
        old = sig[site]
        new = alts[old + 1, p & 1]
        ns = sig[nbr[site, 0]] + sig[nbr[site, 1]] + sig[nbr[site, 2]] + sig[nbr[site, 3]]
        a = 4 * (new * new - old * old) - 2 * (new - old) * ns
        b = old - new
        if us[k] < acc[a + 20, b + 2]:
            sig[site] = new
            counts[old + 1] -= 1
            counts[new + 1] += 1
            if counts[new + 1] == N and target[new + 1]:
                return k + 1, new + 1
    return props.size, -1


class BlumeCapelDynamics:
    """Stepper over flat ``int8`` configurations with exact-configuration targets
    ``"d"``, ``"0"`` and ``"u"``."""

    def __init__(self, params: ModelParams, beta: float):
        self.params = params
        self.beta = float(beta)
        self.N = params.n_sites
        self.nbr = neighbor_table(params.L)
        self.acc = acceptance_table(params, beta)

    def _mask(self, targets):
        m = np.zeros(3, dtype=np.bool_)
        for t in targets:
            m[LABELS.index(t)] = True
        return m

    def label(self, sig):
        s = np.asarray(sig).ravel()
        for v, lab in zip((-1, 0, 1), LABELS):
            if np.all(s == v):
                return lab
        return None

    def is_target(self, start, targets) -> bool:
        return self.label(start) in set(targets)

    def run(self, start, targets, rng, max_steps):
        sig = np.array(start, dtype=np.int8).ravel()
        mask = self._mask(targets)
        counts = np.array([(sig == v).sum() for v in (-1, 0, 1)], dtype=np.int64)
        done = 0
        for m in chunk_sizes(max_steps):
            props = rng.integers(0, 2 * self.N, size=m, dtype=np.int64)
            us = rng.random(m)
            k, hit = _bc_run(sig, self.nbr, _ALTS, self.acc, props, us, counts, mask)
            done += k
            if hit >= 0:
                return done, LABELS[hit], sig
        return done, None, sig


def bc_metropolis_step(params: ModelParams, sigma, beta: float, rng) -> np.ndarray:
    """One proposal and accept/reject step; returns a new configuration."""
    dyn = BlumeCapelDynamics(params, beta)
    sig = np.array(sigma, dtype=np.int8).ravel()
    counts = np.array([(sig == v).sum() for v in (-1, 0, 1)], dtype=np.int64)
    props = rng.integers(0, 2 * dyn.N, size=1, dtype=np.int64)
    _bc_run(sig, dyn.nbr, _ALTS, dyn.acc, props, rng.random(1), counts,
            np.zeros(3, dtype=np.bool_))
    return sig.reshape(np.shape(sigma))


# -- exact chain on tiny lattices ----------------------------------------------------------

def enumerate_configs(L: int) -> np.ndarray:
    """All ``3^(L*L)`` configurations, row ``k`` holding the base-3 digits of ``k``."""
    N = L * L
    if 3 ** N > 5 * 10 ** 6:
        raise ValueError("lattice too large for exhaustive enumeration")
    k = np.arange(3 ** N, dtype=np.int64)
    digits = np.empty((k.size, N), dtype=np.int8)
    for i in range(N):
        digits[:, i] = (k // 3 ** i) % 3
    return digits - 1


def full_chain(params: ModelParams, beta: float):
    """Exact Metropolis chain on every configuration (tiny lattices only).

    Returns the :class:`~metastate.potential.ChainAtBeta` together with the
    configuration table.
    """
    from ..potential import build_metropolis

    L, N = params.L, params.n_sites
    cfg = enumerate_configs(L)
    s = cfg.astype(np.int64)
    nbr = neighbor_table(L)
    ex = sum(((s - s[:, nbr[:, d]]) ** 2).sum(axis=1) for d in (0, 2))
    K = ex - float(params.h) * s.sum(axis=1)
    pow3 = 3 ** np.arange(N, dtype=np.int64)
    rows, cols = [], []
    base = np.arange(cfg.shape[0], dtype=np.int64)
    for i in range(N):
        for shift in (1, 2):
            new = (s[:, i] + 1 + shift) % 3
            rows.append(base)
            cols.append(base + (new - (s[:, i] + 1)) * pow3[i])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    q = sp.csr_matrix((np.full(r.size, 1.0 / (2 * N)), (r, c)), shape=(base.size, base.size))
    return build_metropolis(K, q, beta), cfg


def config_index(sigma) -> int:
    s = np.asarray(sigma, dtype=np.int64).ravel() + 1
    return int((s * 3 ** np.arange(s.size, dtype=np.int64)).sum())


# -- exit-time experiment ---------------------------------------------------------------

@dataclass
class ExperimentRow:
    beta: float
    quantity: str
    estimate: object
    prediction: float | None
    censored: int
    samples: list = field(default_factory=list, repr=False)

    @property
    def ratio(self):
        if self.prediction is None or self.estimate is None:
            return None
        return self.estimate.mean / self.prediction


@dataclass
class ProbabilityEstimate:
    mean: float
    ci_low: float
    ci_high: float
    n_effective: int
    n_censored: int = 0


@dataclass
class ExperimentTable:
    params: ModelParams
    rows: list
    fit: object = None

    def get(self, beta, quantity):
        for r in self.rows:
            if r.quantity == quantity and abs(r.beta - beta) < 1e-12:
                return r
        raise KeyError((beta, quantity))


def _safe_estimate(samples, seed):
    try:
        return estimate_mean_exit(samples, seed=seed)
    except ValueError:
        return None


def exit_time_experiment(params: ModelParams, betas, config: SimConfig,
                         max_steps_factor: float = 50.0) -> ExperimentTable:
    """Measure the three mean exit times and the wrong-order frequency per ``beta``.

    Each replica from ``d`` runs until ``u`` and records when it first meets
    ``0`` or ``u``; a second set of replicas starts from ``0``.  Replica ``r``
    at the ``b``-th inverse temperature uses ``stream(seed, r, b, stage)``.
    """
    if not params.regime_ok and not params.override_regime:
        raise ValueError("lattice below 49/h^4; pass override_regime to run anyway")
    cq = critical_quantities(params)
    d = constant_config(params, -1)
    zero = constant_config(params, 0)
    rows = []
    for bi, beta in enumerate(betas):
        pred = cq.predictions(beta)
        dyn = BlumeCapelDynamics(params, beta)
        cap_total = config.cap(pred["E_d[tau_u]"], max_steps_factor)
        cap_zero = config.cap(pred["E_0[tau_u]"], max_steps_factor)

        def from_d(r, beta=beta, bi=bi, dyn=dyn, cap=cap_total):
            rng = stream(config.seed, r, bi, 0)
            t1, hit, sig = dyn.run(d, ("0", "u"), rng, cap)
            if hit is None:
                return (HittingSample(t1, True, None), HittingSample(t1, True, None))
            first = HittingSample(t1, False, hit)
            if hit == "u":
                return first, HittingSample(t1, False, "u")
            t2, hit2, _ = dyn.run(sig, ("u",), rng, cap - t1) if cap > t1 else (0, None, sig)
            return first, HittingSample(t1 + t2, hit2 is None, hit2)

        def from_zero(r, bi=bi, dyn=dyn, cap=cap_zero):
            rng = stream(config.seed, r, bi, 1)
            t, hit, _ = dyn.run(zero, ("u",), rng, cap)
            return HittingSample(t, hit is None, hit)

        pairs = parallel_map(from_d, range(config.n_replicas))
        first = [p[0] for p in pairs]
        total = [p[1] for p in pairs]
        zs = parallel_map(from_zero, range(config.n_replicas))
        for name, samples, key in (("E_d[tau_0u]", first, "E_d[tau_0u]"),
                                   ("E_0[tau_u]", zs, "E_0[tau_u]"),
                                   ("E_d[tau_u]", total, "E_d[tau_u]")):
            n_c = sum(s.censored for s in samples)
            rows.append(ExperimentRow(beta, name, _safe_estimate(samples, config.seed),
                                      pred[key], n_c, samples))
        done = [s for s in first if not s.censored]
        if done:
            hits = sum(s.first_hit_state == "u" for s in done)
            p, lo, hi = estimate_probability(hits, len(done))
            est = ProbabilityEstimate(p, lo, hi, len(done), len(first) - len(done))
        else:
            est = None
        rows.append(ExperimentRow(beta, "P_d[u before 0]", est, None,
                                  len(first) - len(done)))
    table = ExperimentTable(params, rows)
    pts = [(r.beta, r.estimate.mean) for r in rows
           if r.quantity == "E_d[tau_0u]" and r.estimate is not None]
    if len(pts) >= 3:
        table.fit = fit_exponential(pts)
    return table
