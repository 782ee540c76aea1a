"""Leading-order exit-time predictions and exponential fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .landscape import EnergyLandscape, _as_set, comm_height, cycle_below


@dataclass(frozen=True)
class GateWeights:
    """One-step probabilities from each gate state into the two cycles."""

    p_check: Mapping[int, float]
    h_hat: Mapping[int, float]

    def __post_init__(self):
        if set(self.p_check) != set(self.h_hat):
            raise ValueError("p_check and h_hat must be given on the same gate states")


def gate_prefactor(weights: GateWeights):
    """``k = sum_z p(z) h(z) / (p(z) + h(z))``.

    Works with floats or :class:`fractions.Fraction` values; the result has
    the type of the inputs.
    """
    if not weights.p_check:
        raise ValueError("empty gate")
    terms = []
    for z in sorted(weights.p_check):
        a, b = weights.p_check[z], weights.h_hat[z]
        if not (a > 0 and b > 0):
            raise ValueError(f"gate state {z} does not reach both cycles (p={a}, h={b})")
        terms.append(a * b / (a + b))
    if all(isinstance(t, Fraction) for t in terms):
        return sum(terms, Fraction(0))
    return math.fsum(float(t) for t in terms)


def gate_weights_from_chain(chain, land: EnergyLandscape, W, x: int, A) -> GateWeights:
    """Read ``p_check`` and ``h_hat`` off an exact chain.

    ``Q_x`` and ``Q_A`` are the states joined to ``x`` (resp. ``A``) strictly
    below ``Phi(x, A)``.
    """
    Qx, QA = _gate_cycles(land, x, A)
    P = chain.dense()
    pc, hh = {}, {}
    for z in sorted(_as_set(W)):
        pc[z] = float(sum(P[z, w] for w in Qx))
        hh[z] = float(sum(P[z, w] for w in QA))
    return GateWeights(pc, hh)


def _gate_cycles(land, x, A):
    A = _as_set(A)
    phi = comm_height(land, {x}, A)
    Qx = cycle_below(land, x, phi).members
    QA = set()
    for a in A:
        if land.H[a] < phi - land.tol:
            QA |= cycle_below(land, a, phi).members
    return frozenset(Qx), frozenset(QA)


@dataclass
class GateAssumptionReport:
    passed: bool
    offending_edges: list = field(default_factory=list)
    note: str = "minimal-gate uniqueness is assumed, not certified"


def gate_assumption_check(land: EnergyLandscape, chain, W, x: int, A) -> GateAssumptionReport:
    """Flag zero-cost moves from the gate to anywhere but the two cycles."""
    Qx, QA = _gate_cycles(land, x, A)
    W = _as_set(W)
    allowed = Qx | QA | W
    bad = []
    for z in sorted(W):
        for w in land.neighbors(z):
            if w not in allowed and land.edge(z, w).delta <= land.tol:
                bad.append((z, w))
    return GateAssumptionReport(not bad, bad)


@dataclass(frozen=True)
class SharpPredictions:
    first_stage: float
    second_stage: float
    total: float


def sharp_predictions(gamma: float, k1: float, k2: float, beta: float) -> SharpPredictions:
    """Leading-order mean times ``x2 -> {x1, x0}``, ``x1 -> x0`` and ``x2 -> x0``."""
    if not (k1 > 0 and k2 > 0):
        raise ValueError("prefactors must be positive")
    scale = math.exp(beta * gamma)
    first = scale / k2
    second = scale / k1
    return SharpPredictions(first, second, first + second)


@dataclass(frozen=True)
class ExpFit:
    gamma: float
    prefactor: float
    residual: float
    n_points: int

    def predict(self, beta):
        return self.prefactor * np.exp(self.gamma * np.asarray(beta, float))


def fit_exponential(points: Sequence[tuple[float, float]], window: int | None = 3) -> ExpFit:
    """Least squares of ``log value = beta * gamma + log c``.

    ``window`` keeps only the points with the largest ``beta`` (``None`` keeps
    all).  The residual is the RMS misfit in log space.
    """
    pts = sorted((float(b), float(v)) for b, v in points)
    if window is not None:
        pts = pts[-window:]
    if len(pts) < 3:
        raise ValueError("need at least three points")
    if any(v <= 0 for _, v in pts):
        raise ValueError("values must be positive")
    b = np.array([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    X = np.column_stack([b, np.ones_like(b)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    res = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return ExpFit(float(coef[0]), float(np.exp(coef[1])), res, len(pts))
