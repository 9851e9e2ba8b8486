import warnings
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from iongate import bounds as bnd
from iongate.bounds import ClosureWarning, ErrorReport
from iongate.master import NoiseModel, SimConfig, fidelity, heating_free_simulate, ket, pure_state
from iongate.master import sequential_simulate
from iongate.pulse import Pulse, theta

from conftest import TWO_PI, chain_n, pulse_for

RHO00 = pure_state(ket("00"))


def _mp_norm(pulse, delta):
    """Independent oracle: int |u|^2 with u integrated by mpmath on each segment."""
    mpmath.mp.dps = 30
    h = pulse.segment_duration

    def u(t):
        acc = mpmath.mpc(0)
        for m, amp in enumerate(pulse.amplitudes):
            a, b = m * h, min((m + 1) * h, t)
            if b <= a:
                break
            if delta == 0:
                acc += amp * (b - a)
            else:
                acc += amp * (mpmath.expj(delta * b) - mpmath.expj(delta * a)) / (1j * delta)
        return acc

    pts = [m * h for m in range(pulse.n_segments + 1)]
    return float(mpmath.quad(lambda t: abs(u(t)) ** 2, pts))


def test_simple_bound_examples():
    assert bnd.simple_bound(NoiseModel.zero(3), 300e-6) == 0.0
    assert bnd.simple_bound(NoiseModel.com_linear(2, 50.0), 300e-6) == pytest.approx(0.09)
    deph = NoiseModel(np.zeros(2), np.zeros(2), np.array([200.0, 0.0]))
    assert bnd.simple_bound(deph, 300e-6) == pytest.approx(0.015)


def test_single_segment_norm_closed_form():
    omega, tau, delta = 3e5, 300e-6, TWO_PI * 2.3e4
    pulse = Pulse(np.array([omega, omega]), tau, 0.0)
    exact = omega**2 / delta**2 * (2 * tau - 2 * np.sin(delta * tau) / delta)
    assert bnd.trajectory_norm(pulse, delta) == pytest.approx(exact, rel=1e-12)
    # resonant limit: |u|^2 = omega^2 t^2
    assert bnd.trajectory_norm(pulse, 0.0) == pytest.approx(omega**2 * tau**3 / 3, rel=1e-12)


@pytest.mark.parametrize("delta", [TWO_PI * 1.1e4, TWO_PI * 8.7e4, -TWO_PI * 3e4])
def test_norm_matches_mpmath_and_romberg(delta):
    pulse = Pulse(np.array([3.1e5, -1.2e5, 4.4e5, 2.0e5, -3.3e5, 1.7e5]), 300e-6, 0.0)
    gl = bnd.trajectory_norm(pulse, delta)
    assert gl == pytest.approx(_mp_norm(pulse, delta), rel=1e-10)
    assert gl == pytest.approx(bnd.trajectory_norm_romberg(pulse, delta), rel=1e-8)


def test_zero_inputs_give_zero_bounds(chain2, pulse2):
    zero_noise = NoiseModel.zero(2)
    zero_pulse = Pulse.zero(12, 300e-6, pulse2.mu)
    noise = NoiseModel.com_linear(2, 50.0)
    for fn in (bnd.improved_bound, bnd.loose_bound, bnd.heating_estimator):
        assert fn(pulse2, chain2, zero_noise) == 0.0
        assert fn(zero_pulse, chain2, noise) == 0.0
    assert bnd.trajectory_diag_a(zero_pulse, chain2) == 0.0
    only_down = NoiseModel(np.zeros(2), np.array([50.0, 50.0]), np.zeros(2))
    assert bnd.heating_estimator(pulse2, chain2, only_down) == 0.0


def test_estimator_is_improved_bound_with_heating_rates_only(chain2, pulse2):
    noise = NoiseModel(np.array([30.0, 70.0]), np.array([5.0, 9.0]), np.array([1.0, 2.0]))
    up_only = NoiseModel(noise.gamma_up, np.zeros(2), np.zeros(2))
    assert bnd.heating_estimator(pulse2, chain2, noise) == bnd.improved_bound(pulse2, chain2,
                                                                              up_only)


def test_improved_bound_explicit_sum(chain2, pulse2):
    noise = NoiseModel(np.array([30.0, 70.0]), np.array([5.0, 9.0]), np.array([1.0, 2.0]))
    norms = bnd.trajectory_norms(pulse2, chain2)
    b, eta = chain2.mode_matrix, chain2.lamb_dicke
    ref = sum(abs(np.sum(noise.total * 0.25 * eta**2 * b[j1] * b[j2] * norms))
              for j1 in (0, 1) for j2 in (0, 1))
    assert bnd.improved_bound(pulse2, chain2, noise) == pytest.approx(ref, rel=1e-14)


@given(st.permutations(range(4)))
def test_improved_bound_invariant_under_mode_relabeling(perm):
    chain, pulse = chain_n(4), pulse_for(4)
    perm = np.array(perm)
    noise = NoiseModel(np.array([10.0, 20, 30, 40]), np.array([1.0, 2, 3, 4]), np.array([5.0, 0, 0, 1]))
    shuffled = replace(chain, mode_freqs=chain.mode_freqs[perm],
                       mode_matrix=chain.mode_matrix[:, perm], lamb_dicke=chain.lamb_dicke[perm])
    noise_p = NoiseModel(noise.gamma_up[perm], noise.gamma_down[perm], noise.gamma_deph[perm])
    a = bnd.improved_bound(pulse, chain, noise)
    assert bnd.improved_bound(pulse, shuffled, noise_p) == pytest.approx(a, rel=1e-13)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_loose_bound_dominates_every_single_term(n):
    chain, pulse = chain_n(n), pulse_for(n)
    noise = NoiseModel.com_linear(n, 50.0, "both")
    loose = bnd.loose_bound(pulse, chain, noise)
    norms = bnd.trajectory_norms(pulse, chain)
    ja, jb = chain.gate_ions
    for k in range(n):
        for j in (ja, jb):
            term = noise.total[k] * 0.25 * chain.lamb_dicke[k] ** 2 * chain.mode_matrix[j, k] ** 2
            term *= norms[k]
            assert loose >= term / chain.mode_matrix[j, k] ** 2 * (1 - 1e-12)


def test_diag_a_and_improved_bound_for_two_ions(chain2, pulse2):
    # A weights every mode by (|b_a| + |b_b|)^2 = 2 at N = 2
    norms = bnd.trajectory_norms(pulse2, chain2)
    ref = np.sum(0.25 * chain2.lamb_dicke**2 * 2.0 * norms)
    assert bnd.trajectory_diag_a(pulse2, chain2) == pytest.approx(ref, rel=1e-12)


def test_scaling_estimate():
    assert bnd.scaling_estimate(0.0, 0.1, 50.0, 3e-4) == 0.0
    a = bnd.scaling_estimate(1e6, 0.1, 50.0, 3e-4)
    assert bnd.scaling_estimate(1e6, 0.1, 50.0, 6e-4) == pytest.approx(8 * a)


def test_error_report_rejects_negative_fields():
    with pytest.raises(ValueError):
        ErrorReport(-1.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        ErrorReport(0.0, float("nan"), 0.0, 0.0, 0.0)


def test_error_report_is_deterministic(chain2, pulse2):
    noise = NoiseModel.com_linear(2, 50.0)
    assert bnd.error_report(pulse2, chain2, noise) == bnd.error_report(pulse2, chain2, noise)


def test_open_trajectory_warns(chain2, pulse2):
    amps = pulse2.amplitudes.copy()
    amps[0] *= 1.01
    amps[-1] *= 1.01
    bad = Pulse(amps, pulse2.duration, pulse2.mu)
    noise = NoiseModel.com_linear(2, 50.0)
    with pytest.warns(ClosureWarning):
        bnd.improved_bound(bad, chain2, noise)
    assert bnd.error_report(bad, chain2, noise).warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error", ClosureWarning)
        bnd.improved_bound(pulse2, chain2, noise)
        assert bnd.error_report(pulse2, chain2, noise).warnings == ()


def test_mismatched_noise_length_rejected(chain2, pulse2):
    with pytest.raises(ValueError):
        bnd.improved_bound(pulse2, chain2, NoiseModel.zero(3))


def test_bounds_bracket_simulation_at_two_ions(chain2, pulse2):
    noise = NoiseModel.com_linear(2, 50.0)
    noisy = sequential_simulate(RHO00, chain2, pulse2, noise)
    infid = 1 - fidelity(noisy, heating_free_simulate(RHO00, chain2, pulse2))
    rep = bnd.error_report(pulse2, chain2, noise, infid)
    assert 0 < infid <= rep.simple_bound
    assert infid <= rep.improved_bound * 1.05
    assert rep.improved_bound <= 10 * infid


def test_dephasing_enters_improved_bound_at_full_weight(chain2, pulse2):
    deph = NoiseModel(np.zeros(2), np.zeros(2), np.array([40.0, 40.0]))
    heat = NoiseModel(np.array([40.0, 40.0]), np.zeros(2), np.zeros(2))
    assert bnd.improved_bound(pulse2, chain2, deph) == pytest.approx(
        bnd.improved_bound(pulse2, chain2, heat), rel=1e-14)


# -- drift ---------------------------------------------------------------------------


def test_zero_drift(chain2, pulse2):
    assert bnd.freq_drift_delta(pulse2, chain2, xi_omega=0.0) == 0.0
    assert bnd.theta_drifted(pulse2, chain2, xi_omega=0.0) == theta(pulse2, chain2)
    assert bnd.freq_drift_exact(pulse2, chain2, xi_omega=0.0) == 0.0


def test_perturbative_drift_is_quadratic(chain2, pulse2):
    xi = TWO_PI * 150.0
    a = bnd.freq_drift_delta(pulse2, chain2, xi_omega=xi)
    assert bnd.freq_drift_delta(pulse2, chain2, xi_omega=2 * xi) / a == pytest.approx(4.0,
                                                                                       rel=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_perturbative_drift_matches_finite_difference(n):
    chain, pulse = chain_n(n), pulse_for(n)
    xi, h = TWO_PI * 200.0, TWO_PI * 0.5
    fd = (bnd.theta_drifted(pulse, chain, xi_omega=h)
          - bnd.theta_drifted(pulse, chain, xi_omega=-h)) / (2 * h)
    assert bnd.freq_drift_delta(pulse, chain, xi_omega=xi) == pytest.approx(xi**2 * fd**2,
                                                                             rel=1e-4)


def test_drift_gate_infidelity_vanishes_without_drift(chain2, pulse2):
    assert bnd.drift_gate_infidelity(pulse2, chain2, 0.0) < 1e-12
    assert bnd.drift_gate_infidelity(pulse2, chain2, -TWO_PI * 200) > 0


def test_robust_pulse_tolerates_drift_better(chain2):
    xi = -TWO_PI * 200.0
    robust = pulse_for(2, delta_min=TWO_PI * 3e4)
    plain = pulse_for(2, delta_min=TWO_PI * 3e4, robust=False)
    assert (bnd.drift_gate_infidelity(robust, chain2, xi)
            < bnd.drift_gate_infidelity(plain, chain2, xi))


def test_rabi_drift():
    assert bnd.rabi_drift_infidelity(0.0) == 0.0
    # (pi^2/4) * 1e-4
    assert bnd.rabi_drift_infidelity(0.01) == pytest.approx(2.4674e-4, rel=1e-4)
    for xi in (1e-4, 1e-3, 1e-2, -1e-2):
        exact = bnd.rabi_drift_exact(np.pi / 4, xi)
        assert abs(exact / bnd.rabi_drift_infidelity(xi) - 1) < 0.03


def test_rabi_drift_matches_rescaled_pulse(chain2, pulse2):
    xi = 0.004
    th = theta(pulse2, chain2)
    scaled = theta(pulse2.scaled(1 + xi), chain2)
    assert (th - scaled) ** 2 == pytest.approx(bnd.rabi_drift_exact(th, xi), rel=1e-10)


def test_error_report_sim_field(chain2, pulse2):
    rep = bnd.error_report(pulse2, chain2, NoiseModel.com_linear(2, 50.0), 1e-3)
    assert rep.simulated_infidelity == 1e-3
    assert rep.loose_bound > 0 and rep.trajectory_diag_A > 0


def test_bounds_with_custom_cutoff_sim_agree(chain2, pulse2):
    # bound inputs are cutoff-free, the simulation converges in the cutoff
    noise = NoiseModel.com_linear(2, 50.0)
    ref = heating_free_simulate(RHO00, chain2, pulse2)
    a = 1 - fidelity(sequential_simulate(RHO00, chain2, pulse2, noise), ref)
    b = 1 - fidelity(sequential_simulate(RHO00, chain2, pulse2, noise, SimConfig(fock_cutoff=14)),
                     ref)
    assert abs(a - b) < 1e-8
