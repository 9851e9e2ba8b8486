"""Piecewise-constant amplitude-modulated pulses.

All time integrals over a segment are closed form. They reduce to the
moments ``M_p(z) = int_0^1 v^p exp(z v) dv`` which are evaluated by a power
series near ``z = 0`` and by upward recursion elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, null_space

from .chain import IonChain

TARGET_THETA = np.pi / 4

_SERIES_RADIUS = 1.0
_SERIES_TERMS = 30
_INV_FACT = np.array([1.0 / math.factorial(n) for n in range(_SERIES_TERMS)])


class PulseError(RuntimeError):
    pass


class InfeasibleError(PulseError):
    """Closure constraints leave no free amplitudes."""


class DegeneratePulseError(PulseError):
    """The best pulse in the constraint null space produces no entangling phase."""


def moments(z, pmax: int = 2) -> np.ndarray:
    """Return ``[M_0(z), ..., M_pmax(z)]`` stacked on a leading axis."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((pmax + 1,) + z.shape, dtype=complex)
    small = np.abs(z) < _SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        powers = zs[None, :] ** np.arange(_SERIES_TERMS)[:, None]
        for p in range(pmax + 1):
            coef = _INV_FACT / (np.arange(_SERIES_TERMS) + p + 1)
            out[p][small] = coef @ powers
    big = ~small
    if np.any(big):
        zb = z[big]
        ez = np.exp(zb)
        m = (ez - 1.0) / zb
        out[0][big] = m
        for p in range(1, pmax + 1):
            m = (ez - p * m) / zb
            out[p][big] = m
    return out


@dataclass(frozen=True)
class Pulse:
    """Amplitude-modulated drive shared by both gate ions.

    ``amplitudes`` are the Rabi frequencies of ``M`` equal-length segments
    (rad/s), ``mu`` the laser beat-note frequency in rad/s.
    """

    amplitudes: np.ndarray
    duration: float
    mu: float
    symmetric: bool = False

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=float)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        if amps.ndim != 1 or len(amps) == 0:
            raise ValueError("amplitudes must be a non-empty 1-D sequence")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.symmetric:
            if len(amps) % 2:
                raise ValueError("symmetric pulses need an even segment count")
            if not np.array_equal(amps, amps[::-1]):
                raise ValueError("amplitudes are not mirror symmetric")

    @classmethod
    def from_half(cls, half, duration: float, mu: float) -> "Pulse":
        half = np.asarray(half, dtype=float)
        return cls(np.concatenate([half, half[::-1]]), duration, mu, symmetric=True)

    @classmethod
    def zero(cls, n_segments: int, duration: float, mu: float) -> "Pulse":
        return cls(np.zeros(n_segments), duration, mu, symmetric=n_segments % 2 == 0)

    @property
    def n_segments(self) -> int:
        return len(self.amplitudes)

    @property
    def segment_duration(self) -> float:
        return self.duration / self.n_segments

    @property
    def boundaries(self) -> np.ndarray:
        return np.linspace(0.0, self.duration, self.n_segments + 1)

    @property
    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.amplitudes)))

    def scaled(self, c: float) -> "Pulse":
        return Pulse(c * self.amplitudes, self.duration, self.mu, self.symmetric)

    def with_mu(self, mu: float) -> "Pulse":
        return Pulse(self.amplitudes, self.duration, mu, self.symmetric)

    def delta_min(self, chain: IonChain) -> float:
        return float(np.min(chain.mode_freqs) - self.mu)

    def amplitude_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.clip((t / self.segment_duration).astype(int), 0, self.n_segments - 1)
        return self.amplitudes[idx]


def mu_from_delta_min(chain: IonChain, delta_min: float) -> float:
    return float(np.min(chain.mode_freqs) - delta_min)


# -- per-segment integral tables ------------------------------------------------


def segment_phase_integrals(n_segments: int, duration: float, delta: float) -> np.ndarray:
    """``E_m = int_{t_m}^{t_m+1} exp(i delta t) dt`` for every segment."""
    h = duration / n_segments
    starts = h * np.arange(n_segments)
    m0 = moments(np.full(n_segments, 1j * delta * h), 0)[0]
    return np.exp(1j * delta * starts) * h * m0


def segment_average_integrals(n_segments: int, duration: float, delta: float) -> np.ndarray:
    """``G_m = int_{I_m} (tau - t) exp(i delta t) dt``.

    ``int_0^tau alpha(t) dt`` is linear in the amplitudes with these weights.
    """
    h = duration / n_segments
    starts = h * np.arange(n_segments)
    mom = moments(np.full(n_segments, 1j * delta * h), 1)
    return np.exp(1j * delta * starts) * ((duration - starts) * h * mom[0] - h * h * mom[1])


def theta_kernel(n_segments: int, duration: float, delta: float, derivative: bool = False):
    """Symmetric matrix ``K`` with ``Omega^T K Omega = iint_{t2<t1} Omega Omega sin(delta dt)``.

    With ``derivative=True`` the kernel ``dt * cos(delta dt)`` is used instead,
    i.e. the derivative of the above with respect to ``delta``.
    """
    h = duration / n_segments
    starts = h * np.arange(n_segments)
    z = np.full(n_segments, 1j * delta * h)
    mom = moments(z, 2)
    phase = np.exp(1j * delta * starts)
    e = phase * h * mom[0]
    if not derivative:
        low = np.imag(e[:, None] * np.conj(e)[None, :])
        diag = h * h * np.imag(mom[0, 0] - mom[1, 0])
    else:
        # d/d delta of int_{I_m} exp(i delta t) dt
        de = 1j * phase * (starts * h * mom[0] + h * h * mom[1])
        low = np.imag(de[:, None] * np.conj(e)[None, :] + e[:, None] * np.conj(de)[None, :])
        diag = h**3 * np.real(mom[1, 0] - mom[2, 0])
    low = np.tril(low, -1)
    return 0.5 * (low + low.T) + diag * np.eye(n_segments)


# -- trajectories and the entangling angle ---------------------------------------


def _mode_prefactor(chain: IonChain, j: int, k: int) -> float:
    return 0.5 * chain.lamb_dicke[k] * chain.mode_matrix[j, k]


def alpha_unit(pulse: Pulse, delta: float, t) -> np.ndarray:
    """``int_0^t Omega(t') exp(i delta t') dt'`` for scalar or array ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-15 * pulse.duration) or np.any(t > pulse.duration * (1 + 1e-12)):
        raise ValueError("t must lie in [0, duration]")
    m = pulse.n_segments
    h = pulse.segment_duration
    e = segment_phase_integrals(m, pulse.duration, delta)
    cum = np.concatenate([[0.0], np.cumsum(pulse.amplitudes * e)])
    flat = np.clip(t.ravel(), 0.0, pulse.duration)
    idx = np.minimum((flat / h).astype(int), m - 1)
    start = idx * h
    dt = flat - start
    partial = np.exp(1j * delta * start) * dt * moments(1j * delta * dt, 0)[0]
    out = cum[idx] + pulse.amplitudes[idx] * partial
    return out.reshape(t.shape)


def alpha_at(pulse: Pulse, chain: IonChain, j: int, k: int, t):
    """Phase-space displacement of mode ``k`` driven through ion ``j`` at time ``t``."""
    delta = chain.mode_freqs[k] - pulse.mu
    val = _mode_prefactor(chain, j, k) * alpha_unit(pulse, delta, t)
    return complex(val) if np.ndim(val) == 0 else val


def alpha_time_average(pulse: Pulse, chain: IonChain, j: int, k: int) -> complex:
    """``int_0^tau alpha_j^k(t) dt`` (not divided by tau)."""
    delta = chain.mode_freqs[k] - pulse.mu
    g = segment_average_integrals(pulse.n_segments, pulse.duration, delta)
    return complex(_mode_prefactor(chain, j, k) * np.dot(pulse.amplitudes, g))


def theta_quadratic_form(
    chain: IonChain, n_segments: int, duration: float, mu: float, shift: float = 0.0,
    derivative: bool = False,
) -> np.ndarray:
    """Matrix ``Q`` with ``theta = Omega^T Q Omega`` for the gate pair of ``chain``.

    ``shift`` is added to every detuning (quasi-static mode-frequency drift).
    """
    ja, jb = chain.gate_ions
    q = np.zeros((n_segments, n_segments))
    for k in range(chain.n_modes):
        w = 0.5 * chain.lamb_dicke[k] ** 2 * chain.mode_matrix[ja, k] * chain.mode_matrix[jb, k]
        if w == 0.0:
            continue
        delta = chain.mode_freqs[k] - mu + shift
        q += w * theta_kernel(n_segments, duration, delta, derivative)
    return q


def theta(pulse: Pulse, chain: IonChain, j_a: int | None = None, j_b: int | None = None,
          shift: float = 0.0) -> float:
    """XX rotation angle accumulated by the end of the pulse."""
    chain = _with_pair(chain, j_a, j_b)
    q = theta_quadratic_form(chain, pulse.n_segments, pulse.duration, pulse.mu, shift)
    return float(pulse.amplitudes @ q @ pulse.amplitudes)


def _with_pair(chain: IonChain, j_a, j_b) -> IonChain:
    if j_a is None and j_b is None:
        return chain
    if (j_a, j_b) == chain.gate_ions:
        return chain
    from dataclasses import replace

    return replace(chain, config=replace(chain.config, gate_ions=(j_a, j_b)))


# -- synthesis ------------------------------------------------------------------


def closure_constraints(chain: IonChain, n_segments: int, duration: float, mu: float,
                        robust: bool = True) -> np.ndarray:
    """Real constraint rows acting on the full amplitude vector.

    Robust pulses null the time-averaged displacement of every mode; the
    plain variant only closes the trajectories at the end of the gate.
    """
    rows = []
    for k in range(chain.n_modes):
        delta = chain.mode_freqs[k] - mu
        if robust:
            w = segment_average_integrals(n_segments, duration, delta)
        else:
            w = segment_phase_integrals(n_segments, duration, delta)
        w = w / np.linalg.norm(w)
        rows.append(w.real)
        rows.append(w.imag)
    return np.array(rows)


def _mirror_matrix(n_segments: int) -> np.ndarray:
    half = n_segments // 2
    p = np.zeros((n_segments, half))
    p[np.arange(half), np.arange(half)] = 1.0
    p[n_segments - 1 - np.arange(half), np.arange(half)] = 1.0
    return p


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    first = np.flatnonzero(np.abs(v) > 1e-9 * np.max(np.abs(v)))[0]
    return v if v[first] > 0 else -v


def optimize_amplitudes(
    chain: IonChain,
    j_a: int | None = None,
    j_b: int | None = None,
    tau: float = 300e-6,
    delta_min: float = 2 * np.pi * 0.03e6,
    n_segments: int | None = None,
    robust: bool = True,
    target: float = TARGET_THETA,
) -> Pulse:
    """Synthesize an amplitude-modulated pulse with ``|theta| = target``.

    Free amplitudes are restricted to the null space of the closure
    constraints; within it the direction maximising ``|theta|`` per unit
    amplitude norm is taken and rescaled. The sign of the resulting angle is
    fixed by the mode structure (theta is even in the amplitudes), so callers
    read it back with :func:`theta`. ``robust``
    selects mirror-symmetric pulses with vanishing time-averaged displacement
    (first-order insensitive to detuning errors) over plain closure.
    """
    chain = _with_pair(chain, j_a, j_b)
    n = chain.n_modes
    if n_segments is None:
        n_segments = 4 * n + 4
    if n_segments % 2 and robust:
        raise ValueError("robust pulses need an even number of segments")
    mu = mu_from_delta_min(chain, delta_min)
    if robust:
        basis = _mirror_matrix(n_segments)
    else:
        basis = np.eye(n_segments)
    n_free = basis.shape[1]
    if n_free <= 2 * n:
        raise InfeasibleError(
            f"{n_free} free amplitudes cannot satisfy {2 * n} closure constraints; "
            "increase the segment count"
        )
    cons = closure_constraints(chain, n_segments, tau, mu, robust) @ basis
    null = null_space(cons)
    if null.shape[1] == 0:
        raise InfeasibleError("closure constraints have an empty null space")
    q = basis.T @ theta_quadratic_form(chain, n_segments, tau, mu) @ basis
    evals, evecs = eigh(null.T @ q @ null)
    lam = evals[np.argmax(np.abs(evals))]
    if abs(lam) < 1e-18:
        raise DegeneratePulseError(
            f"largest attainable |theta| per unit amplitude norm is {abs(lam):.3e}"
        )
    ties = np.flatnonzero(np.abs(evals - lam) <= 1e-10 * abs(lam))
    candidates = [_canonical_sign(null @ evecs[:, i]) for i in ties]
    best = max(candidates, key=lambda v: tuple(np.round(v / np.max(np.abs(v)), 12)))
    best = best / np.linalg.norm(best)
    scale = np.sqrt(abs(target) / abs(best @ q @ best))
    amps = basis @ (scale * best)
    if robust:
        return Pulse.from_half(amps[: n_segments // 2], tau, mu)
    return Pulse(amps, tau, mu, symmetric=False)
