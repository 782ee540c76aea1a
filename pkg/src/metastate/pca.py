"""Reversible probabilistic cellular automaton with ``+-1`` spins on a torus.

All sites update in parallel; site ``i`` becomes ``+1`` with probability
``(1 + tanh(beta * phi_i)) / 2`` where ``phi_i = sum_j k(j - i) x_j + h_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numba
import numpy as np

from .landscape import CheckReport
from .montecarlo import stream, total_variation


class DegenerateFieldError(ValueError):
    """A local field vanishes, so the low-temperature limit is undefined."""


@dataclass
class PcaModel:
    L: int
    kernel: dict
    h: object = 0.0

    def __post_init__(self):
        for (di, dj), v in self.kernel.items():
            if abs(self.kernel.get((-di, -dj), 0.0) - v) > 0:
                raise ValueError(f"kernel is not symmetric at offset {(di, dj)}")
        h = np.asarray(self.h, dtype=float)
        if h.ndim and h.shape != (self.L, self.L):
            raise ValueError("site-dependent field must have shape (L, L)")
        self.h_field = np.broadcast_to(h, (self.L, self.L)).astype(float)

    @classmethod
    def nearest_neighbor(cls, L: int, h=0.0, J: float = 1.0) -> "PcaModel":
        return cls(L, {(1, 0): J, (-1, 0): J, (0, 1): J, (0, -1): J}, h)

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    def local_field(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        phi = self.h_field.copy()
        for (di, dj), v in self.kernel.items():
            phi += v * np.roll(x, (-di, -dj), axis=(0, 1))
        return phi

    def check_field(self, x):
        phi = self.local_field(x)
        bad = np.argwhere(phi == 0.0)
        if bad.size:
            raise DegenerateFieldError(f"local field vanishes at site {tuple(bad[0])}")
        return phi

    def log_transition(self, x, y, beta: float) -> float:
        """``log p(x, y) = sum_i log((1 + y_i tanh(beta phi_i)) / 2)``."""
        z = beta * self.local_field(x) * np.asarray(y)
        return float(-np.logaddexp(0.0, -2.0 * z).sum())

    def free_energy(self, x, beta: float) -> float:
        """``F_beta(x) = -beta sum h_i x_i - sum log cosh(beta phi_i)``."""
        a = beta * self.local_field(x)
        logcosh = np.abs(a) + np.log1p(np.exp(-2 * np.abs(a))) - math.log(2)
        return float(-beta * (self.h_field * np.asarray(x)).sum() - logcosh.sum())

    def energy(self, x) -> float:
        """``K(x) = -sum h_i x_i - sum |phi_i|``."""
        return float(-(self.h_field * np.asarray(x)).sum() - np.abs(self.local_field(x)).sum())

    def transition_cost(self, x, y) -> float:
        """``V(x, y) = sum over sites with y_i phi_i < 0 of 2 |phi_i|``."""
        phi = self.local_field(x)
        wrong = np.asarray(y) * phi < 0
        return float(2 * np.abs(phi[wrong]).sum())


def pca_step(model: PcaModel, x, beta: float, rng) -> np.ndarray:
    phi = model.check_field(x)
    prob = 0.5 * (1 + np.tanh(beta * phi))
    return np.where(rng.random(phi.shape) < prob, 1, -1).astype(np.int8)


def enumerate_states(L: int) -> np.ndarray:
    N = L * L
    if N > 16:
        raise ValueError("lattice too large for exhaustive enumeration")
    return np.array(list(product((-1, 1), repeat=N)), dtype=np.int8).reshape(-1, L, L)


def exact_stationary(model: PcaModel, beta: float):
    """States in enumeration order and the normalised weights ``exp(-F)``."""
    states = enumerate_states(model.L)
    F = np.array([model.free_energy(s, beta) for s in states])
    w = np.exp(-(F - F.min()))
    return states, w / w.sum()


@dataclass
class PcaIdentityReport:
    report: CheckReport
    max_transition_residual: float
    max_free_energy_residual: float
    max_balance_residual: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.report.passed


def pca_identity_checks(model: PcaModel, beta: float, pairs, balance: bool = True,
                        tol: float = 1e-10, balance_tol: float = 1e-12) -> PcaIdentityReport:
    """Check the transition-cost identity and the free-energy correction on
    given ``(x, y)`` pairs, and detailed balance over the full state space."""
    if model.n_sites > 16:
        raise ValueError("lattice too large for exhaustive checks")
    rep = CheckReport()
    tr, fe = 0.0, 0.0
    for x, y in pairs:
        phi = model.check_field(x)
        lhs = -model.log_transition(x, y, beta) - beta * model.transition_cost(x, y)
        rhs = float(np.log1p(np.exp(-2 * beta * np.abs(phi))).sum())
        tr = max(tr, abs(lhs - rhs))
        lhs = model.free_energy(x, beta) - beta * model.energy(x)
        rhs = float(-np.log1p(np.exp(-2 * beta * np.abs(phi))).sum() + model.n_sites * math.log(2))
        fe = max(fe, abs(lhs - rhs))
    rep.add("transition cost identity", tr <= tol, f"max residual {tr:.3e}")
    rep.add("free energy correction", fe <= tol, f"max residual {fe:.3e}")
    db = None
    if balance:
        states = enumerate_states(model.L)
        F = np.array([model.free_energy(s, beta) for s in states])
        logp = transition_log_matrix(model, beta, states)
        # log[mu(x) p(x,y)] - log[mu(y) p(y,x)]
        d = (-F[:, None] + logp) - (-F[None, :] + logp.T)
        db = float(np.max(np.abs(np.expm1(d))))
        rep.add("detailed balance", db <= balance_tol, f"max relative residual {db:.3e}")
    return PcaIdentityReport(rep, tr, fe, db)


def transition_log_matrix(model: PcaModel, beta: float, states=None) -> np.ndarray:
    states = enumerate_states(model.L) if states is None else states
    phis = np.array([model.local_field(s).ravel() for s in states]) * beta
    ys = states.reshape(len(states), -1).astype(float)
    # log p(x,y) = -sum_i log(1 + exp(-2 y_i beta phi_i(x)))
    z = phis[:, None, :] * ys[None, :, :]
    return -np.logaddexp(0.0, -2.0 * z).sum(axis=2)


@numba.njit(nogil=True, cache=True)
def _pca_sweeps(x0, prob_plus, us, counts):
    N = prob_plus.shape[1]
    x = x0
    for k in range(us.shape[0]):
        y = 0
        for i in range(N):
            if us[k, i] < prob_plus[x, i]:
                y |= 1 << (N - 1 - i)
        x = y
        counts[x] += 1
    return x


def pca_stationary_histogram(model: PcaModel, beta: float, n_sweeps: int, seed: int = 0):
    """Occupation frequencies over ``n_sweeps`` parallel updates, in enumeration order."""
    states = enumerate_states(model.L)
    N = model.n_sites
    prob = np.array([0.5 * (1 + np.tanh(beta * model.check_field(s).ravel())) for s in states])
    counts = np.zeros(len(states), dtype=np.int64)
    rng = stream(seed, 0)
    x, done = 0, 0
    while done < n_sweeps:
        m = min(1 << 18, n_sweeps - done)
        x = _pca_sweeps(x, prob, rng.random((m, N)), counts)
        done += m
    return counts / counts.sum()


def pca_stationary_tv(model: PcaModel, beta: float, n_sweeps: int, seed: int = 0) -> float:
    _, mu = exact_stationary(model, beta)
    return total_variation(pca_stationary_histogram(model, beta, n_sweeps, seed), mu)
