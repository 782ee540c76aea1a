import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metastate.landscape import (EnergyLandscape, LandscapeError, comm_height, cycle_below,
                                 is_cycle, is_gate, metastable_analysis, path_height, phi_from,
                                 principal_boundary, random_landscape, saddle_set, series_check,
                                 stability_level, toy5, validate)
from oracles import brute_gate, brute_phi, brute_saddles, brute_stability


def test_toy5_heights():
    land = toy5()
    assert comm_height(land, 0, 4) == 7
    assert comm_height(land, 2, 4) == 6
    assert phi_from(land, 3)[3] == land.H[3]
    assert path_height(land, [0, 1, 2]) == 7


def test_toy5_metastable_structure():
    land = toy5()
    rep = metastable_analysis(land)
    assert rep.gamma == 5
    assert rep.metastable == {0, 2}
    assert rep.ground == {4}
    assert stability_level(land, 0) == 5
    assert stability_level(land, 2) == 5
    assert stability_level(land, 4) is None


def test_toy5_cycles_and_boundaries():
    land = toy5()
    c = cycle_below(land, 4, 7)
    assert c.members == {2, 3, 4}
    assert is_cycle(land, c.members)
    assert principal_boundary(land, c) == {1}
    assert principal_boundary(land, {3}) == {2, 4}
    assert principal_boundary(land, {0}) == {1}
    assert not is_cycle(land, {0, 2})


def test_toy5_saddles_and_gates():
    land = toy5()
    assert saddle_set(land, 0, {4}) == {1}
    assert saddle_set(land, 2, {4}) == {3}
    ok, witness = is_gate(land, {1}, 0, {4})
    assert ok and witness is None
    ok, witness = is_gate(land, {3}, 2, {4})
    assert ok
    tri = EnergyLandscape.metropolis([0, 3, 3, -1], [(0, 1), (1, 3), (0, 2), (2, 3)])
    ok, witness = is_gate(tri, {1}, 0, {3})
    assert not ok and witness == [0, 2, 3]


def test_series_check_roles():
    land = toy5()
    assert series_check(land, 0, 2, 4).passed
    rep = series_check(land, 2, 0, 4)
    assert not rep.passed
    assert any("H(x2) > H(x1)" in i.name for i in rep.failures())


def test_validate_reports_named_edge():
    edges = {(0, 1): (1.0, 0.0), (1, 0): (0.5, 0.0)}
    land = EnergyLandscape([0.0, 0.0], edges, check=False)
    v = validate(land)
    assert [x.kind for x in v] == ["reversibility"]
    assert v[0].where == (1, 0)
    with pytest.raises(LandscapeError):
        EnergyLandscape([0.0, 0.0], edges)


def test_validate_other_faults():
    land = EnergyLandscape([0.0, 1.0, 2.0], {(0, 1): (1.0, 0.0)}, check=False)
    kinds = {x.kind for x in validate(land)}
    assert kinds == {"asymmetric-edge", "disconnected"}
    land = EnergyLandscape([0.0, 1.0], {(0, 1): (-1.0, 0.0), (1, 0): (-2.0, 0.0)}, check=False)
    assert "negative-cost" in {x.kind for x in validate(land)}
    with pytest.raises(LandscapeError):
        EnergyLandscape([0.0, 0.0], {(0, 0): (0.0, 0.0)})


def test_cycle_below_requires_level_above_state():
    with pytest.raises(LandscapeError):
        cycle_below(toy5(), 1, 7)


def _fixtures(count=50, seed=2024):
    rng = np.random.default_rng(seed)
    for k in range(count):
        n = int(rng.integers(3, 10))
        yield k, random_landscape(n, rng, extra_edge_prob=0.25, integer=bool(k % 2))


@pytest.mark.parametrize("k,land", list(_fixtures()))
def test_engine_matches_exhaustive_paths(k, land):
    phi = brute_phi(land)
    for x in range(land.n):
        np.testing.assert_array_equal(phi_from(land, x), phi[x])
    lv = brute_stability(land, phi)
    for x in range(land.n):
        assert stability_level(land, x) == lv[x]
    finite = [v for v in lv.values() if v is not None]
    if finite:
        rep = metastable_analysis(land)
        g = max(finite)
        assert rep.gamma == g
        assert rep.metastable == {x for x, v in lv.items() if v is not None and v >= g - land.tol}
    rng = np.random.default_rng(k)
    for _ in range(5):
        z, b = (int(v) for v in rng.choice(land.n, 2, replace=False))
        sad = saddle_set(land, z, {b})
        assert sad == brute_saddles(land, phi, z, {b})
        cands = [sad] + [frozenset({int(w)}) for w in range(land.n) if w not in (z, b)]
        for W in cands:
            if not W or z in W or b in W:
                continue
            assert is_gate(land, W, z, {b})[0] == brute_gate(land, W, z, {b})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 8))
def test_comm_height_is_symmetric_ultrametric(seed, n):
    land = random_landscape(n, np.random.default_rng(seed))
    phi = np.array([phi_from(land, x) for x in range(n)])
    np.testing.assert_allclose(phi, phi.T, rtol=0, atol=1e-12)
    for x in range(n):
        for y in range(n):
            assert phi[x, y] >= max(land.H[x], land.H[y]) - 1e-12
            assert np.all(phi[x, y] <= np.maximum(phi[x], phi[:, y]) + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_cycles_are_closed_under_low_moves(seed):
    rng = np.random.default_rng(seed)
    land = random_landscape(7, rng)
    x = int(rng.integers(7))
    level = land.H[x] + float(rng.uniform(0.1, 4.0))
    c = cycle_below(land, x, level)
    for u in c.members:
        for v in land.neighbors(u):
            if v not in c.members:
                assert land.weight(u, v) >= level - land.tol
