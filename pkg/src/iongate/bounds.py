"""Analytic error bounds, heating estimator and quasi-static drift errors.

Every bound reduces to the per-mode trajectory norms
``I_k = int_0^tau |u_k(t)|^2 dt`` with ``u_k(t) = int_0^t Omega e^{i delta_k t'} dt'``,
since both gate ions see the same pulse and ``alpha_j^k = eta_k b_j^k u_k / 2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import romb

from .chain import IonChain
from .master import NoiseModel, analytic_final_state, fidelity, ideal_unitary, ket, pure_state
from .pulse import Pulse, _with_pair, alpha_unit, theta, theta_quadratic_form

GL_NODES = 32
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)
# |alpha(tau)| above this fraction of max |alpha| voids the small-error expansion
CLOSURE_TOL = 1e-6


class ClosureWarning(UserWarning):
    """The pulse leaves a mode displaced at the end of the gate."""


@dataclass(frozen=True)
class DriftConfig:
    xi_omega: float = -2 * np.pi * 0.2e3
    xi_rabi: float = 0.0


@dataclass(frozen=True)
class ErrorReport:
    simple_bound: float
    improved_bound: float
    loose_bound: float
    heating_estimator: float
    trajectory_diag_A: float
    simulated_infidelity: float | None = None
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name in ("simple_bound", "improved_bound", "loose_bound",
                     "heating_estimator", "trajectory_diag_A"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


def _check_rates(chain: IonChain, noise: NoiseModel):
    if noise.n_modes != chain.n_modes:
        raise ValueError(f"noise model has {noise.n_modes} modes, chain has {chain.n_modes}")


def trajectory_norm(pulse: Pulse, delta: float) -> float:
    """``int_0^tau |u(t)|^2 dt`` by Gauss-Legendre quadrature on every segment."""
    h = pulse.segment_duration
    starts = pulse.boundaries[:-1]
    t = starts[:, None] + 0.5 * h * (_GL_X[None, :] + 1.0)
    u = alpha_unit(pulse, delta, t)
    return float(0.5 * h * np.sum(np.abs(u) ** 2 @ _GL_W))


def trajectory_norm_romberg(pulse: Pulse, delta: float, levels: int = 8) -> float:
    """Romberg-extrapolated trapezoid rule, used to cross-check the quadrature."""
    h = pulse.segment_duration
    n = 2**levels + 1
    total = 0.0
    for t0 in pulse.boundaries[:-1]:
        t = np.linspace(t0, t0 + h, n)
        total += romb(np.abs(alpha_unit(pulse, delta, t)) ** 2, dx=h / (n - 1))
    return float(total)


def trajectory_norms(pulse: Pulse, chain: IonChain) -> np.ndarray:
    return np.array([trajectory_norm(pulse, d) for d in chain.detunings(pulse.mu)])


def closure_residual(pulse: Pulse, chain: IonChain) -> float:
    """Largest ``|u_k(tau)|`` relative to the largest ``|u_k(t)|`` over all modes."""
    worst = 0.0
    t = np.linspace(0.0, pulse.duration, 513)
    for d in chain.detunings(pulse.mu):
        u = np.abs(alpha_unit(pulse, d, t))
        if u.max() > 0:
            worst = max(worst, u[-1] / u.max())
    return worst


def simple_bound(noise: NoiseModel, tau: float) -> float:
    return float(np.sum(noise.gamma_up + noise.gamma_down + 0.25 * noise.gamma_deph) * tau)


def _pair_sum(pulse, chain, rates, j_a, j_b) -> float:
    chain = _with_pair(chain, j_a, j_b)
    _check_rates(chain, NoiseModel(rates, rates, rates))
    ja, jb = chain.gate_ions
    norms = trajectory_norms(pulse, chain)
    weights = 0.25 * chain.lamb_dicke**2 * rates * norms
    total = 0.0
    for j1 in (ja, jb):
        for j2 in (ja, jb):
            total += abs(np.sum(weights * chain.mode_matrix[j1] * chain.mode_matrix[j2]))
    return float(total)


def _warn_if_open(pulse, chain) -> tuple[str, ...]:
    res = closure_residual(pulse, chain)
    if res > CLOSURE_TOL:
        msg = f"trajectories do not close: |alpha(tau)|/max|alpha| = {res:.2e}"
        warnings.warn(msg, ClosureWarning, stacklevel=3)
        return (msg,)
    return ()


def improved_bound(pulse: Pulse, chain: IonChain, noise: NoiseModel,
                   j_a: int | None = None, j_b: int | None = None) -> float:
    """Trajectory-weighted bound summed over the four ordered gate-ion pairs."""
    _warn_if_open(pulse, _with_pair(chain, j_a, j_b))
    return _pair_sum(pulse, chain, noise.total, j_a, j_b)


def heating_estimator(pulse: Pulse, chain: IonChain, noise: NoiseModel,
                      j_a: int | None = None, j_b: int | None = None) -> float:
    """As :func:`improved_bound` with only the heating rates kept."""
    return _pair_sum(pulse, chain, noise.gamma_up, j_a, j_b)


def loose_bound(pulse: Pulse, chain: IonChain, noise: NoiseModel,
                j_a: int | None = None, j_b: int | None = None) -> float:
    # both ions share the pulse, so the maximum over j is over identical terms
    chain = _with_pair(chain, j_a, j_b)
    _check_rates(chain, noise)
    terms = noise.total * chain.lamb_dicke**2 * trajectory_norms(pulse, chain)
    return float(np.max(terms))


def trajectory_diag_a(pulse: Pulse, chain: IonChain,
                      j_a: int | None = None, j_b: int | None = None) -> float:
    """``sum_{j1 j2} sum_k int |alpha_j1^k* alpha_j2^k| dt``."""
    chain = _with_pair(chain, j_a, j_b)
    ja, jb = chain.gate_ions
    b = chain.mode_matrix
    weight = 0.25 * chain.lamb_dicke**2 * (np.abs(b[ja]) + np.abs(b[jb])) ** 2
    return float(np.sum(weight * trajectory_norms(pulse, chain)))


def scaling_estimate(omega_max: float, eta_max: float, gamma_max: float, tau: float) -> float:
    """Order-of-magnitude scaling ``Omega_max^2 eta_max Gamma_max tau^3`` (no prefactor)."""
    return omega_max**2 * eta_max * gamma_max * tau**3


def error_report(pulse: Pulse, chain: IonChain, noise: NoiseModel,
                 simulated_infidelity: float | None = None) -> ErrorReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClosureWarning)
        notes = _warn_if_open(pulse, chain)
    return ErrorReport(
        simple_bound=simple_bound(noise, pulse.duration),
        improved_bound=_pair_sum(pulse, chain, noise.total, None, None),
        loose_bound=loose_bound(pulse, chain, noise),
        heating_estimator=heating_estimator(pulse, chain, noise),
        trajectory_diag_A=trajectory_diag_a(pulse, chain),
        simulated_infidelity=simulated_infidelity,
        warnings=notes,
    )


# -- quasi-static drift ------------------------------------------------------------


def theta_drifted(pulse: Pulse, chain: IonChain, j_a: int | None = None,
                  j_b: int | None = None, xi_omega: float = 0.0) -> float:
    """Entangling angle with every detuning shifted by ``xi_omega``."""
    return theta(pulse, chain, j_a, j_b, shift=xi_omega)


def theta_detuning_derivative(pulse: Pulse, chain: IonChain, j_a: int | None = None,
                              j_b: int | None = None) -> float:
    """``sum_k d theta / d delta_k`` in seconds."""
    chain = _with_pair(chain, j_a, j_b)
    q = theta_quadratic_form(chain, pulse.n_segments, pulse.duration, pulse.mu, derivative=True)
    return float(pulse.amplitudes @ q @ pulse.amplitudes)


def freq_drift_delta(pulse: Pulse, chain: IonChain, j_a: int | None = None,
                     j_b: int | None = None, xi_omega: float = 0.0) -> float:
    """First-order drift infidelity ``xi^2 (d theta / d xi)^2``."""
    return xi_omega**2 * theta_detuning_derivative(pulse, chain, j_a, j_b) ** 2


def freq_drift_exact(pulse: Pulse, chain: IonChain, j_a: int | None = None,
                     j_b: int | None = None, xi_omega: float = 0.0) -> float:
    """``(theta - theta_drifted)^2`` from an exact recomputation of the angle."""
    th = theta(pulse, chain, j_a, j_b)
    return (th - theta_drifted(pulse, chain, j_a, j_b, xi_omega)) ** 2


def drift_gate_infidelity(pulse: Pulse, chain: IonChain, xi_omega: float,
                          rho_spin0=None) -> float:
    """Full gate infidelity under a detuning drift, residual displacement included.

    The drifted gate is the noise-free propagator with every detuning shifted
    by ``xi_omega``; the reference is the ideal XX rotation by the undrifted
    angle. Unlike :func:`freq_drift_exact` this also sees the phonon
    entanglement left behind when the trajectories no longer close.
    """
    rho0 = pure_state(ket("00")) if rho_spin0 is None else rho_spin0
    u = ideal_unitary(theta(pulse, chain))
    target = u @ rho0 @ u.conj().T
    drifted = analytic_final_state(rho0, chain, pulse.with_mu(pulse.mu - xi_omega))
    return 1.0 - fidelity(drifted, target)


def rabi_drift_infidelity(xi_rabi: float) -> float:
    return np.pi**2 / 4 * xi_rabi**2


def rabi_drift_exact(theta_value: float, xi_rabi: float) -> float:
    """Angle error squared when every amplitude is scaled by ``1 + xi_rabi``."""
    return (theta_value - (1 + xi_rabi) ** 2 * theta_value) ** 2
