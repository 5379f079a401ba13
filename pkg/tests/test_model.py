import math

import numpy as np
import pytest

from pqsmag import model, qmat
from pqsmag.model import DetuningGrid, ModelParams, default_params

P = default_params()


def test_default_values():
    assert P.g == 2.0
    assert P.kappa == 10.0 and P.kappa1 == 10.0
    assert P.delta_r == 0.0
    assert P.beta_drive == 1.0


def test_defaults_scale_with_gamma():
    p3 = default_params(3.0)
    assert p3.g == 6.0 and p3.kappa == 30.0 and p3.beta_drive == pytest.approx(math.sqrt(3.0))
    assert model.purcell_rate(p3, 0.0) == pytest.approx(3 * model.purcell_rate(P, 0.0), rel=1e-12)


def test_validation():
    with pytest.raises(ValueError):
        ModelParams(kappa=5.0, kappa1=10.0)
    with pytest.raises(ValueError):
        ModelParams(eta=1.5)
    with pytest.raises(ValueError):
        ModelParams(gamma=0.0)
    with pytest.warns(UserWarning):
        ModelParams(g=6.0)


def test_grid():
    grid = DetuningGrid.uniform(-2, 2, 25)
    assert len(grid) == 25
    assert grid.spacing == pytest.approx(1 / 6)
    with pytest.raises(ValueError):
        DetuningGrid(np.array([0.0, 1.0, 3.0]))


def test_drive_amplitude():
    assert model.drive_alpha(P) == pytest.approx(math.sqrt(0.2), rel=1e-14)
    assert model.drive_alpha(P.with_(beta_drive=0.0)) == 0
    assert abs(model.drive_alpha(P.with_(delta_r=1e8))) < 1e-6


def test_purcell_rates():
    assert model.purcell_rate(P, 0.0) == pytest.approx(0.8, rel=1e-12)
    assert model.purcell_rate(P, 2.0) == pytest.approx(10 / 13, rel=1e-12)
    assert model.purcell_rate(P, -2.0) == pytest.approx(10 / 13, rel=1e-12)
    assert model.purcell_rate(P.with_(g=0.0), 0.3) == 0.0


def test_cavity_shift():
    assert model.epsilon_s(P, P.delta_r) == 0.0
    assert model.epsilon_s(P, 2.0) == pytest.approx(-1 / 13, rel=1e-12)
    for x in (0.3, 1.0, 2.0):
        assert model.epsilon_s(P, P.delta_r - x) == pytest.approx(-model.epsilon_s(P, P.delta_r + x), rel=1e-14)


def test_hamiltonian():
    for d in np.linspace(-2, 2, 25):
        h = model.hamiltonian(P, d)
        np.testing.assert_array_equal(h, qmat.dag(h))
    off = P.with_(beta_drive=0.0, g=0.0)
    np.testing.assert_allclose(model.hamiltonian(off, 0.7), np.diag([0.35, -0.35]))
    h0 = model.hamiltonian(P, 0.0)
    assert abs(h0[0, 1]) == pytest.approx(2 * math.sqrt(0.2), rel=1e-14)


def test_lindblad_operators():
    c1, c2, c3 = model.lindblads(P, 0.0)
    np.testing.assert_allclose(c1, math.sqrt(0.8) * qmat.SIGMA_MINUS, rtol=1e-14)
    np.testing.assert_array_equal(model.lindblads(P.with_(gamma_dec=0.0), 0.0)[1], np.zeros((2, 2)))
    np.testing.assert_allclose(qmat.dag(c3) @ c3, 0.5 * P.gamma_phi * qmat.IDENTITY)


def test_output_field():
    c0, lam = model.c_out(P, 0.0)
    assert c0 == pytest.approx(1.0, abs=1e-14)
    assert abs(lam) == pytest.approx(2 * math.sqrt(0.2), rel=1e-14)
    _, lam0 = model.c_out(P.with_(g=0.0), 0.0)
    assert lam0 == 0


def test_measurement_superoperator(rng):
    from conftest import random_density

    rho = random_density(rng)
    out = model.meas_superop(P, 0.5, rho)
    np.testing.assert_allclose(out, qmat.dag(out), atol=1e-14)
    np.testing.assert_array_equal(model.meas_superop(P.with_(eta=0.0), 0.5, rho), np.zeros((2, 2)))
    c0, _ = model.c_out(P, 0.3)
    p0 = P.with_(phi_lo=0.0, eta=0.64)
    assert model.mean_signal(p0, 0.3, qmat.GROUND) == pytest.approx(2 * 0.8 * c0.real, rel=1e-14)


def test_steady_state_is_stationary():
    for d in (-2.0, 0.0, 1.5):
        rho = model.steady_state(P, d)
        np.testing.assert_allclose(model.lindbladian(P, d, rho), 0, atol=1e-12)
        assert np.trace(rho).real == pytest.approx(1.0)
        assert min(qmat.eigvalsh2(rho)) >= -1e-12


def test_signal_carries_detuning_sign():
    # with the local oscillator in quadrature the steady-state signal is odd in detuning
    s = [model.mean_signal(P, d, model.steady_state(P, d)) for d in (-1.0, 0.0, 1.0)]
    assert s[0] - s[1] == pytest.approx(-(s[2] - s[1]), rel=1e-9)
    assert abs(s[2] - s[0]) > 0.05
