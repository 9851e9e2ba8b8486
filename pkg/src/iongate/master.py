"""Lindblad evolution of the two gate spins coupled to the transverse modes.

The spin register is ordered ``|00>, |01>, |10>, |11>`` with the first
factor belonging to ``j_a``. Joint spin-phonon operators act on
``spin (x) mode_0 (x) mode_1 ...`` and density matrices are vectorized row
major, so ``vec(A rho B) = (A kron B^T) vec(rho)``.

The sequential simulator evolves one mode at a time against the running
spin state. Because the per-mode generators commute, this reproduces the
full master equation exactly while keeping every integration on a
``4 * N_c`` dimensional space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .chain import IonChain
from .pulse import Pulse, alpha_at, theta_quadratic_form

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
I2 = np.eye(2)
SX_A = np.kron(SX, I2)
SX_B = np.kron(I2, SX)
XX = SX_A @ SX_B
# X eigenbasis of each spin: column s of HADAMARD2 has eigenvalue 1 - 2 s
_HAD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
HADAMARD2 = np.kron(_HAD, _HAD)
_XSIGN = np.array([1.0, -1.0])
X_EIGS_A = np.repeat(_XSIGN, 2)
X_EIGS_B = np.tile(_XSIGN, 2)


class SimulationError(RuntimeError):
    pass


class CutoffError(SimulationError):
    """Population reached the top Fock level of a truncated mode."""


class AccuracyError(SimulationError):
    """Step refinement changed the result by more than the certification tolerance."""


class ResourceError(SimulationError):
    """Full-space simulation would exceed the memory budget."""


class StateError(ValueError):
    """Input is not a valid density matrix."""


@dataclass(frozen=True)
class NoiseModel:
    """Per-mode heating (phonons/s), cooling (phonons/s) and dephasing (1/s) rates."""

    gamma_up: np.ndarray
    gamma_down: np.ndarray
    gamma_deph: np.ndarray

    def __post_init__(self):
        arrs = []
        for name in ("gamma_up", "gamma_down", "gamma_deph"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite and non-negative")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrs.append(a)
        if len({len(a) for a in arrs}) != 1:
            raise ValueError("rate arrays must have one entry per mode")

    @property
    def n_modes(self) -> int:
        return len(self.gamma_up)

    @property
    def total(self) -> np.ndarray:
        return self.gamma_up + self.gamma_down + self.gamma_deph

    @classmethod
    def zero(cls, n: int) -> "NoiseModel":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    @classmethod
    def com_linear(cls, n: int, gamma: float, channel: str = "heating") -> "NoiseModel":
        """COM mode (index 0) at ``gamma * n``, every other mode at ``gamma``."""
        rates = np.full(n, float(gamma))
        rates[0] = gamma * n
        return cls._from_channel(rates, channel)

    @classmethod
    def uniform(cls, n: int, gamma: float, channel: str = "heating") -> "NoiseModel":
        return cls._from_channel(np.full(n, float(gamma)), channel)

    @classmethod
    def _from_channel(cls, rates: np.ndarray, channel: str) -> "NoiseModel":
        zero = np.zeros_like(rates)
        if channel == "heating":
            return cls(rates, rates, zero)
        if channel == "dephasing":
            return cls(zero, zero, rates)
        if channel == "both":
            return cls(rates, rates, rates)
        raise ValueError(f"unknown noise channel {channel!r}")

    def permuted(self, order) -> "NoiseModel":
        order = np.asarray(order)
        return NoiseModel(self.gamma_up[order], self.gamma_down[order], self.gamma_deph[order])

    def only_mode(self, k: int) -> "NoiseModel":
        mask = np.zeros(self.n_modes)
        mask[k] = 1.0
        return NoiseModel(self.gamma_up * mask, self.gamma_down * mask, self.gamma_deph * mask)


@dataclass(frozen=True)
class SimConfig:
    """Numerical settings shared by the sequential and full-space simulators.

    ``integrator`` selects how a single mode is propagated: ``"expm"`` takes
    exact matrix exponentials segment by segment in the frame rotating at
    the mode detuning, ``"rk4"`` runs fixed-step RK4 on the lab-frame
    Liouvillian. The full-space oracle always uses RK4.
    """

    fock_cutoff: int = 10
    initial_nbar: float = 0.0
    # minimum RK4 steps per pulse segment
    rk_substeps_per_segment: int = 256
    steps_per_cycle: int = 40
    leakage_tol: float = 1e-4
    integrator: str = "expm"
    memory_budget_bytes: float = 4e9
    certify_tol: float = 1e-8

    def __post_init__(self):
        if self.fock_cutoff < 2:
            raise ValueError("fock_cutoff must be at least 2")
        if self.initial_nbar < 0:
            raise ValueError("initial_nbar must be non-negative")
        if not 0 < self.leakage_tol < 1:
            raise ValueError("leakage_tol must lie in (0, 1)")
        if min(self.rk_substeps_per_segment, self.steps_per_cycle) < 1:
            raise ValueError("step counts must be positive")
        if self.integrator not in ("expm", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")

    def refined(self) -> "SimConfig":
        """Same settings with every RK4 step halved."""
        return replace(
            self,
            rk_substeps_per_segment=2 * self.rk_substeps_per_segment,
            steps_per_cycle=2 * self.steps_per_cycle,
        )


# -- spin states ----------------------------------------------------------------


def ket(label: str) -> np.ndarray:
    """Computational basis ket for a two-character label such as ``"00"``."""
    v = np.zeros(4, dtype=complex)
    v[int(label, 2)] = 1.0
    return v


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def check_spin_state(rho, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise StateError(f"spin state must be 4x4, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise StateError("spin state is not Hermitian")
    if abs(np.trace(rho) - 1) > trace_tol:
        raise StateError(f"spin state trace is {np.trace(rho).real:.12f}")
    if np.linalg.eigvalsh(rho)[0] < -psd_tol:
        raise StateError("spin state has a negative eigenvalue")
    return rho


def trace_distance(rho1, rho2) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho1 - rho2))))


def _psd_sqrt(rho: np.ndarray, psd_tol: float) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w[0] < -psd_tol:
        raise StateError(f"state has eigenvalue {w[0]:.3e} below tolerance")
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho1, rho2, psd_tol: float = 1e-8) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2``.

    The trace equals the nuclear norm of ``sqrt(rho1) sqrt(rho2)``, which
    avoids square roots of rounding-level eigenvalues for rank-deficient
    states and is symmetric in the arguments by construction.
    """
    s1 = _psd_sqrt(np.asarray(rho1, dtype=complex), psd_tol)
    s2 = _psd_sqrt(np.asarray(rho2, dtype=complex), psd_tol)
    f = float(np.sum(np.linalg.svd(s1 @ s2, compute_uv=False)) ** 2)
    return min(max(f, 0.0), 1.0)


def ideal_unitary(theta_value: float) -> np.ndarray:
    """``exp(i theta sigma_x^a sigma_x^b)``; the gate carried out by a closed pulse."""
    return np.cos(theta_value) * np.eye(4) + 1j * np.sin(theta_value) * XX


# -- operators ------------------------------------------------------------------


def thermal_populations(nbar: float, cutoff: int) -> np.ndarray:
    if nbar == 0:
        p = np.zeros(cutoff)
        p[0] = 1.0
        return p
    q = nbar / (nbar + 1)
    p = q ** np.arange(cutoff)
    return p / p.sum()


def _destroy(cutoff: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, cutoff)), 1, format="csr", dtype=complex)


def _spin_coupling(chain: IonChain, k: int) -> np.ndarray:
    ja, jb = chain.gate_ions
    return chain.mode_matrix[ja, k] * SX_A + chain.mode_matrix[jb, k] * SX_B


def _commutator_super(op: sp.spmatrix) -> sp.csr_matrix:
    """Superoperator of ``rho -> -i [op, rho]``."""
    d = op.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    return (-1j * (sp.kron(op, eye) - sp.kron(eye, op.T))).tocsr()


def _dissipator_super(c: sp.spmatrix) -> sp.csr_matrix:
    d = c.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    cdc = (c.conj().T @ c).tocsr()
    return (sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)).tocsr()


@dataclass
class _Drive:
    """``H(t) = g(t) K + conj(g(t)) K^dag`` with ``g = (i/2) eta Omega(t) exp(i delta t)``."""

    forward: sp.csr_matrix  # superoperator of -i[K, .]
    eta: float
    delta: float


@dataclass
class _Generator:
    dim: int
    static: sp.csr_matrix
    drives: list[_Drive] = field(default_factory=list)

    def apply(self, t: float, omega: float, v: np.ndarray) -> np.ndarray:
        out = self.static @ v
        if omega != 0.0 and self.drives:
            y = np.zeros_like(v)
            for d in self.drives:
                g = 0.5j * d.eta * omega * np.exp(1j * d.delta * t)
                y += g * (d.forward @ v)
            # the K^dag part is the adjoint of the K part on Hermitian states
            y_mat = y.reshape(self.dim, self.dim)
            out += y + y_mat.conj().T.ravel()
        return out

    @property
    def max_frequency(self) -> float:
        return max((abs(d.delta) for d in self.drives), default=0.0)


def _steps_for_segment(gen: _Generator, h: float, sim: SimConfig) -> int:
    cycles = gen.max_frequency * h / (2 * np.pi)
    return max(sim.rk_substeps_per_segment, math.ceil(sim.steps_per_cycle * cycles))


def _integrate(gen: _Generator, pulse: Pulse, v: np.ndarray, sim: SimConfig, checkpoint=None):
    """Classic RK4 over the pulse; step sizes align with segment boundaries."""
    h_seg = pulse.segment_duration
    n = _steps_for_segment(gen, h_seg, sim)
    dt = h_seg / n
    for m, omega in enumerate(pulse.amplitudes):
        t0 = m * h_seg
        for i in range(n):
            t = t0 + i * dt
            k1 = gen.apply(t, omega, v)
            k2 = gen.apply(t + 0.5 * dt, omega, v + 0.5 * dt * k1)
            k3 = gen.apply(t + 0.5 * dt, omega, v + 0.5 * dt * k2)
            k4 = gen.apply(t + dt, omega, v + dt * k3)
            v = v + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if checkpoint is not None:
            checkpoint(m, v)
    return v


def _check_trace(mat: np.ndarray, where: str):
    tr = np.trace(mat)
    if abs(tr - 1) > 1e-9:
        raise AccuracyError(f"trace drifted to {tr.real:.12f} ({where})")


# -- single mode and sequential simulation ---------------------------------------


def _single_mode_generator(chain: IonChain, pulse: Pulse, noise: NoiseModel, k: int,
                           cutoff: int) -> _Generator:
    a = _destroy(cutoff)
    ad = a.conj().T.tocsr()
    num = (ad @ a).tocsr()
    spin_eye = sp.identity(4, dtype=complex, format="csr")
    dim = 4 * cutoff
    static = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
    for rate, op in ((noise.gamma_up[k], ad), (noise.gamma_down[k], a),
                     (noise.gamma_deph[k], num)):
        if rate > 0:
            static = static + rate * _dissipator_super(sp.kron(spin_eye, op).tocsr())
    coupling = sp.kron(sp.csr_matrix(_spin_coupling(chain, k)), ad).tocsr()
    drive = _Drive(_commutator_super(coupling), chain.lamb_dicke[k],
                   chain.mode_freqs[k] - pulse.mu)
    return _Generator(dim, static.tocsr(), [drive])


def _evolve_rk4(rho_spin, chain, pulse, noise, k, sim, rho_mode, leak_check):
    nc = sim.fock_cutoff
    gen = _single_mode_generator(chain, pulse, noise, k, nc)
    dim = gen.dim

    def checkpoint(m, v):
        blocks = v.reshape(4, nc, 4, nc)
        _check_trace(v.reshape(dim, dim), f"mode {k}, segment {m}")
        leak_check(m, np.real(np.trace(blocks[:, nc - 1, :, nc - 1])))

    joint = np.kron(rho_spin, rho_mode)
    v = _integrate(gen, pulse, joint.ravel(), sim, checkpoint)
    return np.einsum("anbn->ab", v.reshape(4, nc, 4, nc))


def _evolve_expm(rho_spin, chain, pulse, noise, k, sim, rho_mode, leak_check):
    # In the X eigenbasis the coupling is diagonal in the spins, so block
    # (s, s') of the joint state only sees the spin eigenvalues x_s, x_s'.
    # In the frame rotating with exp(i delta n t) the drive is constant over
    # a segment and the generator for the block is
    #   -i (H_s (x) 1 - 1 (x) H_s'^T) + D,  H_s = y_s F + delta n,
    # with y_s = Omega_m x_s and F = (i eta / 2)(a^dag - a).
    nc = sim.fock_cutoff
    ja, jb = chain.gate_ions
    x = chain.mode_matrix[ja, k] * X_EIGS_A + chain.mode_matrix[jb, k] * X_EIGS_B
    delta = chain.mode_freqs[k] - pulse.mu
    a = np.diag(np.sqrt(np.arange(1, nc)), 1).astype(complex)
    ad = a.conj().T
    num = np.diag(np.arange(nc)).astype(complex)
    eye = np.eye(nc)
    force = 0.5j * chain.lamb_dicke[k] * (ad - a)
    diss = np.zeros((nc * nc, nc * nc), dtype=complex)
    for rate, op in ((noise.gamma_up[k], ad), (noise.gamma_down[k], a),
                     (noise.gamma_deph[k], num)):
        if rate > 0:
            cdc = op.conj().T @ op
            diss += rate * (np.kron(op, op.conj()) - 0.5 * np.kron(cdc, eye)
                            - 0.5 * np.kron(eye, cdc.T))
    h = pulse.segment_duration
    # photon-number parity maps the generator for (y, y') to the one for (-y, -y')
    parity = (-1.0) ** np.arange(nc)
    pp = np.kron(parity, parity)
    pp2 = np.outer(pp, pp)
    # vec(rho^dag) = conj(vec(rho)) permuted, so block (t, s) follows from (s, t)
    swap = np.arange(nc * nc).reshape(nc, nc).T.ravel()
    cache: dict = {}

    def unitary(y):
        if y not in cache:
            if -y in cache:
                cache[y] = parity[:, None] * cache[-y] * parity[None, :]
            else:
                cache[y] = expm(-1j * h * (y * force + delta * num))
        return cache[y]

    def propagator(ys, yt):
        orbit = {(ys, yt): "id", (-ys, -yt): "par", (yt, ys): "swap", (-yt, -ys): "both"}
        canon = min(orbit)
        if canon not in cache:
            hs = canon[0] * force + delta * num
            ht = canon[1] * force + delta * num
            cache[canon] = expm(h * (-1j * (np.kron(hs, eye) - np.kron(eye, ht.T)) + diss))
        e = cache[canon]
        how = orbit[canon]
        if how in ("par", "both"):
            e = e * pp2
        if how in ("swap", "both"):
            e = np.conj(e)[np.ix_(swap, swap)]
        return e

    rho_x = HADAMARD2 @ rho_spin @ HADAMARD2
    # joint state, block (s, s') = rho_x[s, s'] * rho_mode
    pairs = [(s, t) for s in range(4) for t in range(s, 4)]
    blocks = {p: rho_x[p] * rho_mode for p in pairs}
    closed = not diss.any()
    for m, omega in enumerate(pulse.amplitudes):
        y = omega * x
        for s, t in pairs:
            if closed:
                # without dissipation each block is U_s rho U_t^dag
                blocks[s, t] = unitary(y[s]) @ blocks[s, t] @ unitary(y[t]).conj().T
            else:
                blocks[s, t] = (propagator(y[s], y[t]) @ blocks[s, t].ravel()).reshape(nc, nc)
        diag = [blocks[s, s] for s in range(4)]
        _check_trace(sum(diag), f"mode {k}, segment {m}")
        leak_check(m, float(np.real(sum(d[nc - 1, nc - 1] for d in diag))))

    out_x = np.zeros((4, 4), dtype=complex)
    for s, t in pairs:
        out_x[s, t] = np.trace(blocks[s, t])
        out_x[t, s] = np.conj(out_x[s, t])
    return HADAMARD2 @ out_x @ HADAMARD2


def evolve_single_mode(rho_spin, chain: IonChain, pulse: Pulse, noise: NoiseModel, k: int,
                       sim: SimConfig = SimConfig()) -> np.ndarray:
    """Couple mode ``k`` (thermal initial state) to ``rho_spin``, evolve, trace it out."""
    rho_spin = check_spin_state(rho_spin)
    nc = sim.fock_cutoff
    rho_mode = np.diag(thermal_populations(sim.initial_nbar, nc)).astype(complex)

    def leak_check(m, top):
        if top > sim.leakage_tol:
            raise CutoffError(
                f"mode {k} has population {top:.2e} in Fock level {nc - 1} after "
                f"segment {m}; increase fock_cutoff"
            )

    step = _evolve_expm if sim.integrator == "expm" else _evolve_rk4
    out = step(rho_spin, chain, pulse, noise, k, sim, rho_mode, leak_check)
    out = 0.5 * (out + out.conj().T)
    return check_spin_state(out, trace_tol=1e-9)


def sequential_simulate(rho_spin0, chain: IonChain, pulse: Pulse, noise: NoiseModel,
                        sim: SimConfig = SimConfig(), order=None) -> np.ndarray:
    """Fold :func:`evolve_single_mode` over all modes (in ``order`` if given)."""
    if noise.n_modes != chain.n_modes:
        raise ValueError("noise model must have one entry per mode")
    if order is not None and sorted(order) != list(range(chain.n_modes)):
        raise ValueError("order must be a permutation of the mode indices")
    rho = check_spin_state(rho_spin0)
    for k in range(chain.n_modes) if order is None else order:
        rho = evolve_single_mode(rho, chain, pulse, noise, k, sim)
    return rho


def heating_free_simulate(rho_spin0, chain: IonChain, pulse: Pulse,
                          sim: SimConfig = SimConfig(), backend: str = "numeric") -> np.ndarray:
    """Final spin state without the Lindblad terms.

    ``backend="numeric"`` integrates the master equation with all rates
    zero; ``"analytic"`` uses the closed-form gate propagator.
    """
    if backend == "numeric":
        return sequential_simulate(rho_spin0, chain, pulse, NoiseModel.zero(chain.n_modes), sim)
    if backend == "analytic":
        return analytic_final_state(rho_spin0, chain, pulse, nbar=sim.initial_nbar)
    raise ValueError(f"unknown backend {backend!r}")


def certify_accuracy(rho_spin0, chain: IonChain, pulse: Pulse, noise: NoiseModel,
                     sim: SimConfig = SimConfig()) -> float:
    """Check the sequential result against an independent integration.

    RK4 runs are compared with the same run at half the step. Exact
    exponentials are insensitive to splitting a segment, so they are compared
    with RK4 at half the configured step instead. Raises ``AccuracyError`` if the two
    final states differ by more than ``certify_tol`` in trace distance, or
    if either run leaves the set of density matrices.
    """
    if sim.integrator == "rk4":
        check_sim = sim.refined()
    else:
        check_sim = replace(sim.refined(), integrator="rk4")
    try:
        result = sequential_simulate(rho_spin0, chain, pulse, noise, sim)
        check = sequential_simulate(rho_spin0, chain, pulse, noise, check_sim)
    except StateError as err:
        # a step coarse enough to break positivity is an accuracy failure
        raise AccuracyError(f"integration produced an invalid state: {err}") from err
    dist = trace_distance(result, check)
    if dist > sim.certify_tol:
        raise AccuracyError(
            f"independent integration moved the final state by {dist:.2e} "
            f"(> {sim.certify_tol:.0e}); refine the integration steps"
        )
    return dist


# -- full-space oracle ------------------------------------------------------------


def _embed(op: sp.spmatrix, k: int, n_modes: int, cutoff: int) -> sp.csr_matrix:
    left = sp.identity(cutoff**k, dtype=complex, format="csr")
    right = sp.identity(cutoff ** (n_modes - k - 1), dtype=complex, format="csr")
    return sp.kron(sp.kron(left, op), right).tocsr()


def brute_force_memory(n_modes: int, cutoff: int) -> float:
    """Rough byte count of the full-space Liouvillian and work vectors."""
    d = 4 * cutoff**n_modes
    # commutator supers (2 d nnz(K) each) + dissipators + RK4 vectors
    nnz_k = 8 * (cutoff - 1) * cutoff ** (n_modes - 1)
    nnz = n_modes * (2 * d * nnz_k + 3 * (d * d + (4 * cutoff**n_modes) ** 2 // cutoff))
    return 32.0 * nnz + 16.0 * 8 * d * d


def brute_force_simulate(rho_spin0, chain: IonChain, pulse: Pulse, noise: NoiseModel,
                         sim: SimConfig = SimConfig()) -> np.ndarray:
    """Integrate all modes simultaneously on the ``4 * N_c**N`` space."""
    n = chain.n_modes
    nc = sim.fock_cutoff
    need = brute_force_memory(n, nc)
    if need > sim.memory_budget_bytes:
        raise ResourceError(
            f"full-space simulation needs ~{need / 1e9:.1f} GB "
            f"(budget {sim.memory_budget_bytes / 1e9:.1f} GB)"
        )
    rho0 = check_spin_state(rho_spin0)
    a = _destroy(nc)
    ad = a.conj().T.tocsr()
    num = (ad @ a).tocsr()
    spin_eye = sp.identity(4, dtype=complex, format="csr")
    dim = 4 * nc**n
    static = sp.csr_matrix((dim * dim, dim * dim), dtype=complex)
    drives = []
    for k in range(n):
        for rate, op in ((noise.gamma_up[k], ad), (noise.gamma_down[k], a),
                         (noise.gamma_deph[k], num)):
            if rate > 0:
                full = sp.kron(spin_eye, _embed(op, k, n, nc)).tocsr()
                static = static + rate * _dissipator_super(full)
        coupling = sp.kron(sp.csr_matrix(_spin_coupling(chain, k)), _embed(ad, k, n, nc))
        drives.append(_Drive(_commutator_super(coupling.tocsr()), chain.lamb_dicke[k],
                             chain.mode_freqs[k] - pulse.mu))
    gen = _Generator(dim, static.tocsr(), drives)

    rho_mode = np.diag(thermal_populations(sim.initial_nbar, nc))
    joint = rho0
    for _ in range(n):
        joint = np.kron(joint, rho_mode)
    shape = (4,) + (nc,) * n

    def checkpoint(m, v):
        mat = v.reshape(dim, dim)
        _check_trace(mat, f"segment {m}")
        diag = np.real(np.diag(mat)).reshape(shape)
        for k in range(n):
            axes = tuple(i for i in range(n + 1) if i != k + 1)
            top = diag.sum(axis=axes)[nc - 1]
            if top > sim.leakage_tol:
                raise CutoffError(
                    f"mode {k} has population {top:.2e} in Fock level {nc - 1}; "
                    "increase fock_cutoff"
                )

    v = _integrate(gen, pulse, joint.ravel(), sim, checkpoint)
    mat = v.reshape(4, nc**n, 4, nc**n)
    out = np.einsum("anbn->ab", mat)
    out = 0.5 * (out + out.conj().T)
    return check_spin_state(out, trace_tol=1e-9)


# -- closed-form noise-free propagator --------------------------------------------


def mode_theta(pulse: Pulse, chain: IonChain, k: int) -> float:
    """Contribution of mode ``k`` to the XX rotation angle."""
    single = np.zeros(chain.n_modes)
    single[k] = 1.0
    sub = replace(chain, lamb_dicke=chain.lamb_dicke * single)
    q = theta_quadratic_form(sub, pulse.n_segments, pulse.duration, pulse.mu)
    return float(pulse.amplitudes @ q @ pulse.amplitudes)


def analytic_final_state(rho_spin0, chain: IonChain, pulse: Pulse, modes=None,
                         nbar: float = 0.0) -> np.ndarray:
    """Reduced spin state after the ideal (noise-free) gate propagator.

    In the X eigenbasis the propagator displaces mode ``k`` by
    ``beta_s = x_a alpha_a + x_b alpha_b`` and multiplies by
    ``exp(i theta x_a x_b)``; tracing out a thermal mode leaves the
    characteristic function ``exp(-|beta_s - beta_s'|^2 (nbar + 1/2))`` times
    a phase. Fock space is not truncated here.
    """
    rho0 = check_spin_state(rho_spin0)
    ja, jb = chain.gate_ions
    modes = range(chain.n_modes) if modes is None else modes
    rho_x = HADAMARD2 @ rho0 @ HADAMARD2
    factor = np.ones((4, 4), dtype=complex)
    xx = X_EIGS_A * X_EIGS_B
    for k in modes:
        aa = alpha_at(pulse, chain, ja, k, pulse.duration)
        ab = alpha_at(pulse, chain, jb, k, pulse.duration)
        beta = X_EIGS_A * aa + X_EIGS_B * ab
        bs, bp = beta[:, None], beta[None, :]
        gamma = bs - bp
        factor *= np.exp(1j * np.imag(np.conj(bp) * bs) - np.abs(gamma) ** 2 * (nbar + 0.5))
        th = mode_theta(pulse, chain, k)
        factor *= np.exp(1j * th * (xx[:, None] - xx[None, :]))
    out = HADAMARD2 @ (rho_x * factor) @ HADAMARD2
    return 0.5 * (out + out.conj().T)
