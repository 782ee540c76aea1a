import warnings
from fractions import Fraction

import numpy as np
import pytest

from metastate.blume_capel.droplets import (DropletSpec, build_droplet, critical_droplets,
                                            droplet_cycle_report, gate_prefactor_enumeration,
                                            single_protuberance_set,
                                            strict_downhill_enumeration)
from metastate.blume_capel.dynamics import (BlumeCapelDynamics, acceptance_table,
                                            bc_metropolis_step, config_index, full_chain)
from metastate.blume_capel.model import (TABLE1, EnergyDelta, ModelParams, RegimeWarning,
                                         constant_config, critical_quantities,
                                         delta_single_flip, flip_deltas, hamiltonian,
                                         spin_flip, table_check)
from metastate.montecarlo import SimConfig, estimate_mean_exit, sample_hitting_time, stream
from metastate.potential import chain_residuals, mean_hitting_time

P15 = ModelParams(15, 0.7)


def small(L=3, h=0.7):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        return ModelParams(L, h, override_regime=True)


def test_energy_delta_parse_and_format():
    for text, ab in [("12-2h", (12, -2)), ("-h", (0, -1)), ("-4", (-4, 0)), ("2-h", (2, -1)),
                     ("-12-2h", (-12, -2)), ("h", (0, 1)), ("-2+h", (-2, 1))]:
        e = EnergyDelta.parse(text)
        assert (e.a, e.b) == ab
        assert EnergyDelta.parse(str(e)) == e
    with pytest.raises(ValueError):
        EnergyDelta.parse("2*h")
    assert EnergyDelta(12, -7).exact(0.7) == Fraction(71, 10)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(15, 0.5)
    with pytest.raises(ValueError):
        ModelParams(15, 1.2)
    with pytest.raises(ValueError):
        ModelParams(2, 0.7)
    assert ModelParams(15, 0.7).regime_ok
    assert not small().regime_ok
    with pytest.warns(RegimeWarning):
        ModelParams(5, 0.7, override_regime=True)


def test_local_flip_energy_matches_global_difference():
    p = small(6, 0.3)
    rng = stream(0, 0)
    for _ in range(200):
        sig = rng.integers(-1, 2, (6, 6))
        i = (int(rng.integers(6)), int(rng.integers(6)))
        s = int(rng.choice([v for v in (-1, 0, 1) if v != sig[i]]))
        d = hamiltonian(p, spin_flip(sig, i, s)) - hamiltonian(p, sig)
        assert delta_single_flip(p, sig, i, s) == d
        a, b = flip_deltas(sig)
        assert (a[s + 1][i], b[s + 1][i]) == (d.a, d.b)


def test_table_rows_recomputed():
    rep = table_check()
    assert len(rep.entries) == 45
    assert rep.n_pass == 44
    (bad,) = rep.mismatches()
    assert (bad.row, bad.column) == ("N", "H(3)-H(2)")
    assert bad.computed == EnergyDelta(-2, -1)


def test_table_row_n_is_internally_inconsistent():
    # the printed third column must equal the second minus the first
    broken = []
    for row, (_, printed) in TABLE1.items():
        d21, d31, d32 = (EnergyDelta.parse(t) for t in printed)
        if d31 - d21 != d32:
            broken.append(row)
    assert broken == ["N"]


def test_critical_quantities():
    cq = critical_quantities(P15)
    assert cq.lc == 3
    assert cq.gamma == EnergyDelta(12, -7)
    assert cq.gamma_value == pytest.approx(7.1)
    assert cq.k1 == cq.k2 == Fraction(10, 3)
    assert cq.prefactor_total == 2 * cq.prefactor_first
    pred = cq.predictions(2.0)
    assert pred["E_d[tau_u]"] == pytest.approx(0.6 * np.exp(14.2))


@pytest.mark.parametrize("phase", [(-1, 0), (0, 1)])
def test_gate_enumeration(phase):
    g = gate_prefactor_enumeration(P15, phase)
    assert g.k == Fraction(10, 3)
    assert g.n_configs == 4 * 3 * 225
    assert (g.n_corner, g.n_interior) == (1800, 900)
    assert not g.escapes
    assert g.energy_offset == {EnergyDelta(12, -7)}


def test_critical_droplets_are_distinct():
    assert len(critical_droplets(P15)) == 2700


def test_r33_cycle():
    spec = DropletSpec((5, 5), 3, 3)
    res, rep = droplet_cycle_report(P15, spec)
    assert rep.passed, str(rep)
    assert res.size == 5
    assert len(res.principal_boundary) == 12
    zeta = build_droplet(P15, spec)
    assert res.boundary_energy - hamiltonian(P15, zeta) == EnergyDelta(2, -1)
    assert len(single_protuberance_set(P15, zeta)) == 12


def test_large_droplet_and_stripe():
    _, rep = droplet_cycle_report(P15, DropletSpec((4, 4), 4, 5))
    assert rep.passed, str(rep)
    res, rep = droplet_cycle_report(P15, DropletSpec((5, 0), 3, 15))
    assert rep.passed and res.size == 1
    assert len(res.principal_boundary) == 30


def test_subcritical_elongated_droplet_reports_lower_state():
    res, rep = droplet_cycle_report(P15, DropletSpec((5, 5), 2, 4))
    assert not rep.passed
    assert res.lower_witness is not None
    low = hamiltonian(P15, res.lower_witness[-1]) - hamiltonian(P15, res.zeta)
    assert low == EnergyDelta(-2, 2)


@pytest.mark.parametrize("offset", [0, 1, 2])
def test_strict_downhill_paths_are_standard(offset):
    rep = strict_downhill_enumeration(P15, DropletSpec((5, 5), 3, 3, 1, "E", offset))
    assert rep.counts["other"] == 0
    assert rep.counts["growing"] >= 1 and rep.counts["shrinking"] == 1


def test_droplet_spec_validation():
    with pytest.raises(ValueError):
        DropletSpec((0, 0), 1, 3).validate(15)
    with pytest.raises(ValueError):
        DropletSpec((0, 0), 3, 3, 4, "N").validate(15)


def test_acceptance_table():
    acc = acceptance_table(P15, 1.0)
    assert acc[20 + 4, 2 - 1] == pytest.approx(np.exp(-(4 - 0.7)))
    assert acc[20 - 4, 2 + 1] == 1.0


def test_full_chain_detailed_balance_3x3():
    p = small()
    ch, cfg = full_chain(p, 0.8)
    assert cfg.shape == (19683, 9)
    res = chain_residuals(ch)
    assert res["row_sum"] < 1e-12
    assert res["detailed_balance"] < 1e-12
    sig = cfg[12345].reshape(3, 3)
    assert config_index(sig) == 12345


def test_mc_matches_exact_chain_3x3():
    p = small()
    beta = 0.6
    ch, _ = full_chain(p, beta)
    d, u = constant_config(p, -1), constant_config(p, 1)
    exact = mean_hitting_time(ch, config_index(d), {config_index(u)})
    dyn = BlumeCapelDynamics(p, beta)
    samples = sample_hitting_time(dyn, d, ("u",), SimConfig(beta, seed=5, n_replicas=4000))
    est = estimate_mean_exit(samples, seed=5)
    half = (est.ci_high - est.ci_low) / 2
    assert abs(est.mean - exact) < 1.5 * half


def test_single_step_reproducible():
    p = small()
    sig = constant_config(p, 0)
    a = bc_metropolis_step(p, sig, 1.0, stream(1, 0))
    b = bc_metropolis_step(p, sig, 1.0, stream(1, 0))
    np.testing.assert_array_equal(a, b)
    assert (a != sig).sum() <= 1
