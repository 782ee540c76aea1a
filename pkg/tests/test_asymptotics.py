import math
from fractions import Fraction

import pytest

from metastate.asymptotics import (GateWeights, fit_exponential, gate_assumption_check,
                                   gate_prefactor, gate_weights_from_chain, sharp_predictions)
from metastate.landscape import EnergyLandscape, is_gate, toy5
from metastate.potential import build_chain, capacity, mean_hitting_time


def test_gate_prefactor_toy5():
    land = toy5()
    ch = build_chain(land, 8.0)
    w = gate_weights_from_chain(ch, land, {1}, 0, {4})
    assert w.p_check[1] == pytest.approx(0.5) and w.h_hat[1] == pytest.approx(0.5)
    assert gate_prefactor(w) == pytest.approx(0.25)
    w2 = gate_weights_from_chain(ch, land, {3}, 2, {4})
    assert gate_prefactor(w2) == pytest.approx(0.25)


def test_gate_prefactor_exact_arithmetic_and_symmetries():
    w = GateWeights({0: Fraction(1, 3), 7: Fraction(1, 6)}, {0: Fraction(1, 6), 7: Fraction(1, 2)})
    k = gate_prefactor(w)
    assert isinstance(k, Fraction)
    assert k == Fraction(1, 9) + Fraction(1, 8)
    relabel = GateWeights({5: Fraction(1, 6), 9: Fraction(1, 3)}, {5: Fraction(1, 2), 9: Fraction(1, 6)})
    assert gate_prefactor(relabel) == k
    a = GateWeights({0: Fraction(1, 3)}, {0: Fraction(1, 6)})
    b = GateWeights({7: Fraction(1, 6)}, {7: Fraction(1, 2)})
    assert gate_prefactor(a) + gate_prefactor(b) == k
    with pytest.raises(ValueError):
        gate_prefactor(GateWeights({0: 0.0}, {0: 0.5}))


def test_capacity_matches_gate_prefactor():
    land = toy5()
    ch = build_chain(land, 8.0)
    scaled = capacity(ch, {0}, {4}) * ch.Z * math.exp(8.0 * 7)
    assert scaled == pytest.approx(0.25, rel=0.02)


def test_gate_assumption_check():
    land = toy5()
    ch = build_chain(land, 4.0)
    assert is_gate(land, {1}, 0, {4})[0]
    assert gate_assumption_check(land, ch, {1}, 0, {4}).passed
    assert gate_assumption_check(land, ch, {3}, 2, {4}).passed
    # a gate with a free fall into a third well
    bad = EnergyLandscape.metropolis([1, 5, 0, 2], [(0, 1), (1, 2), (1, 3)], r=math.log(3))
    rep = gate_assumption_check(bad, build_chain(bad, 4.0), {1}, 0, {2})
    assert not rep.passed and rep.offending_edges == [(1, 3)]


def test_sharp_predictions():
    p = sharp_predictions(5.0, 0.25, 0.25, 8.0)
    assert p.total == pytest.approx(8 * math.exp(40))
    assert p.total == pytest.approx(2 * p.first_stage)
    assert p.total == p.first_stage + p.second_stage
    with pytest.raises(ValueError):
        sharp_predictions(5.0, 0.0, 1.0, 1.0)


def test_addition_rule_convergence_toy5():
    ratios = []
    for b in (4.0, 6.0, 8.0):
        t = mean_hitting_time(build_chain(toy5(), b), 0, {4})
        ratios.append(t / sharp_predictions(5.0, 0.25, 0.25, b).total)
    gaps = [abs(r - 1) for r in ratios]
    assert gaps[0] > gaps[1] > gaps[2]


def test_fit_recovers_exact_model():
    pts = [(b, 3.5 * math.exp(2.25 * b)) for b in (1.0, 2.0, 3.0, 4.0)]
    f = fit_exponential(pts, window=None)
    assert f.gamma == pytest.approx(2.25, abs=1e-12)
    assert f.prefactor == pytest.approx(3.5, rel=1e-12)
    assert f.residual < 1e-12
    assert f.predict(5.0) == pytest.approx(3.5 * math.exp(11.25))


def test_fit_toy5_exact():
    pts = [(b, mean_hitting_time(build_chain(toy5(), b), 0, {4})) for b in (6.0, 7.0, 8.0)]
    f = fit_exponential(pts)
    assert 4.95 <= f.gamma <= 5.05
    assert 7.2 <= f.prefactor <= 8.8


def test_fit_window_and_errors():
    pts = [(b, math.exp(b)) for b in (1.0, 2.0, 3.0)] + [(0.5, 100.0)]
    assert fit_exponential(pts).n_points == 3
    assert fit_exponential(pts, window=None).residual > 0.5
    with pytest.raises(ValueError):
        fit_exponential([(1.0, 1.0), (2.0, -1.0), (3.0, 2.0)])
    with pytest.raises(ValueError):
        fit_exponential([(1.0, 1.0), (2.0, 1.0)])
