import numpy as np
import pytest
from hypothesis import given, strategies as st

from iongate.chain import (ConvergenceError, StabilityError, TrapConfig, build_chain,
                           equilibrium_positions, lamb_dicke, transverse_modes)

TWO_PI = 2 * np.pi

# hand arithmetic with CODATA 2018 constants, 171Yb at 2pi x 3 MHz
ETA_3MHZ = 0.11112513482328173


def test_two_ion_positions_closed_form():
    cfg = TrapConfig(ion_count=2)
    u = equilibrium_positions(cfg) / cfg.length_scale
    np.testing.assert_allclose(u, [-(0.25 ** (1 / 3)), 0.25 ** (1 / 3)], rtol=1e-12)


def test_three_ion_positions_closed_form():
    cfg = TrapConfig(ion_count=3)
    u = equilibrium_positions(cfg) / cfg.length_scale
    a = 1.25 ** (1 / 3)
    np.testing.assert_allclose(u, [-a, 0.0, a], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("n", [1, 2, 5, 12, 17])
def test_positions_balance_forces_and_are_symmetric(n):
    cfg = TrapConfig(ion_count=n)
    u = equilibrium_positions(cfg) / cfg.length_scale
    assert np.all(np.diff(u) > 0)
    np.testing.assert_allclose(u, -u[::-1], atol=1e-13)
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    force = -u + np.sum(np.sign(diff) / diff**2, axis=1)
    assert np.max(np.abs(force)) < 1e-11


def test_custom_initial_guess_converges_to_same_crystal():
    cfg = TrapConfig(ion_count=4)
    ref = equilibrium_positions(cfg)
    other = equilibrium_positions(cfg, initial_guess=np.array([-3.0, -1.0, 0.5, 2.0]))
    np.testing.assert_allclose(other, ref, rtol=1e-10)


def test_convergence_error_carries_residual():
    with pytest.raises(ConvergenceError) as err:
        equilibrium_positions(TrapConfig(ion_count=6), max_iter=1)
    assert err.value.residual > 0


def test_single_ion_mode_is_trap_frequency():
    chain = build_chain(TrapConfig(ion_count=1))
    np.testing.assert_allclose(chain.mode_freqs, [TWO_PI * 3e6])
    np.testing.assert_allclose(chain.mode_matrix, [[1.0]])


def test_two_ion_modes_closed_form(chain2):
    # COM at omega_x, rocking mode at sqrt(omega_x^2 - omega_z^2)
    np.testing.assert_allclose(chain2.mode_freqs / TWO_PI,
                               [3e6, 2.973213749463701e6], rtol=1e-12)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(chain2.mode_matrix, [[s, s], [s, -s]], atol=1e-12)


def test_lamb_dicke_matches_hand_arithmetic():
    eta = lamb_dicke(TrapConfig(), [TWO_PI * 3e6])
    np.testing.assert_allclose(eta, [ETA_3MHZ], rtol=1e-8)


@given(st.integers(min_value=2, max_value=17))
def test_modes_orthonormal_descending_com_first(n):
    chain = build_chain(TrapConfig(ion_count=n))
    b = chain.mode_matrix
    np.testing.assert_allclose(b.T @ b, np.eye(n), atol=1e-10)
    assert np.all(np.diff(chain.mode_freqs) < 0)
    np.testing.assert_allclose(chain.mode_freqs[0], TWO_PI * 3e6, rtol=1e-10)
    np.testing.assert_allclose(b[:, 0], np.full(n, 1 / np.sqrt(n)), atol=1e-10)
    assert np.all(chain.mode_freqs < TWO_PI * 3e6 * (1 + 1e-12))


@given(st.integers(min_value=2, max_value=20))
def test_long_chains_stable_in_a_softer_axial_trap(n):
    chain = build_chain(TrapConfig(ion_count=n, omega_z=TWO_PI * 0.2e6))
    assert np.all(chain.mode_freqs > 0)


def test_mode_sign_convention():
    chain = build_chain(TrapConfig(ion_count=6))
    for k in range(6):
        col = chain.mode_matrix[:, k]
        first = col[np.flatnonzero(np.abs(col) > 1e-9)[0]]
        assert first > 0


def test_buckled_chain_raises_stability_error():
    with pytest.raises(StabilityError):
        build_chain(TrapConfig(ion_count=2, omega_z=TWO_PI * 4e6))
    with pytest.raises(StabilityError):
        build_chain(TrapConfig(ion_count=18))


@pytest.mark.parametrize("kwargs", [
    {"ion_count": 0}, {"ion_mass": -1.0}, {"omega_z": 0.0}, {"k_vec": -1.0},
    {"ion_count": 3, "gate_ions": (1, 1)}, {"ion_count": 3, "gate_ions": (0, 3)},
])
def test_trap_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrapConfig(**kwargs)


def test_transverse_modes_accepts_given_positions():
    cfg = TrapConfig(ion_count=3)
    freqs, b = transverse_modes(cfg, equilibrium_positions(cfg))
    assert freqs.shape == (3,) and b.shape == (3, 3)


def test_csv_rows_layout(chain2):
    assert chain2.csv_header() == ["k", "omega_k_rad_s", "eta_k", "b_0", "b_1"]
    rows = chain2.to_csv_rows()
    assert len(rows) == 2 and rows[1][0] == 1
    np.testing.assert_allclose(rows[0][2], chain2.lamb_dicke[0])
