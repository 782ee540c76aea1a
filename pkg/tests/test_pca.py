import numpy as np
import pytest

from metastate.montecarlo import stream
from metastate.pca import (DegenerateFieldError, PcaModel, enumerate_states, exact_stationary,
                           pca_identity_checks, pca_stationary_tv, pca_step,
                           transition_log_matrix)


def _pairs(model, n, seed=0):
    rng = stream(seed, 0)
    L = model.L
    return [(rng.choice([-1, 1], (L, L)), rng.choice([-1, 1], (L, L))) for _ in range(n)]


def test_identities_hold():
    model = PcaModel.nearest_neighbor(3, 0.3)
    rep = pca_identity_checks(model, 1.2, _pairs(model, 100))
    assert rep.passed, str(rep.report)
    assert rep.max_transition_residual <= 1e-10
    assert rep.max_balance_residual <= 1e-12


def test_identities_with_site_field():
    h = np.linspace(0.1, 0.9, 9).reshape(3, 3)
    model = PcaModel.nearest_neighbor(3, h)
    assert pca_identity_checks(model, 0.7, _pairs(model, 20, 1)).passed


def test_transition_rows_are_stochastic():
    model = PcaModel.nearest_neighbor(2, 0.25)
    logp = transition_log_matrix(model, 0.9)
    np.testing.assert_allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-12)


def test_stationary_measure_is_invariant():
    model = PcaModel.nearest_neighbor(2, 0.25)
    _, mu = exact_stationary(model, 0.9)
    P = np.exp(transition_log_matrix(model, 0.9))
    np.testing.assert_allclose(mu @ P, mu, atol=1e-13)


def test_degenerate_field_rejected():
    model = PcaModel.nearest_neighbor(3, 0.0)
    x = np.array([[1, 1, -1], [-1, -1, 1], [1, 1, -1]])
    assert np.any(model.local_field(x) == 0)
    with pytest.raises(DegenerateFieldError):
        pca_step(model, x, 1.0, stream(0))


def test_kernel_must_be_symmetric():
    with pytest.raises(ValueError):
        PcaModel(3, {(1, 0): 1.0})


def test_enumeration_size_guard():
    assert enumerate_states(2).shape == (16, 2, 2)
    with pytest.raises(ValueError):
        enumerate_states(5)


def test_mc_histogram_close_to_exact():
    model = PcaModel.nearest_neighbor(3, 0.3)
    assert pca_stationary_tv(model, 0.5, 10 ** 6, seed=4) < 0.02
