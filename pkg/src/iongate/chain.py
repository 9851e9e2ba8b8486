"""Linear ion crystal: equilibrium positions, transverse modes, Lamb-Dicke factors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants as const

AMU = const.physical_constants["atomic mass constant"][0]
YB171_MASS = 170.9363258 * AMU


class ChainError(RuntimeError):
    """Base class for crystal construction failures."""


class ConvergenceError(ChainError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual


class StabilityError(ChainError):
    def __init__(self, mode: int, omega_sq: float):
        super().__init__(
            f"transverse mode {mode} is unstable (omega^2 = {omega_sq:.4e} rad^2/s^2); "
            "the linear chain buckles, lower omega_z or raise omega_x"
        )
        self.mode = mode


@dataclass(frozen=True)
class TrapConfig:
    ion_count: int = 2
    ion_mass: float = YB171_MASS
    omega_x: float = 2 * np.pi * 3.0e6
    omega_z: float = 2 * np.pi * 0.4e6
    k_vec: float = 2 * 2 * np.pi / 355e-9
    gate_ions: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.ion_count < 1:
            raise ValueError("ion_count must be positive")
        if self.ion_mass <= 0:
            raise ValueError("ion_mass must be positive")
        if self.omega_z <= 0 or self.omega_x <= 0:
            raise ValueError("trap frequencies must be positive")
        if self.k_vec < 0:
            raise ValueError("k_vec must be non-negative")
        ja, jb = self.gate_ions
        if self.ion_count >= 2 and not 0 <= ja < jb < self.ion_count:
            raise ValueError(
                f"gate_ions must satisfy 0 <= j_a < j_b < N, got {self.gate_ions}"
            )

    @property
    def length_scale(self) -> float:
        """Characteristic spacing (e^2 / (4 pi eps0 m omega_z^2))^(1/3) in meters."""
        return (
            const.e**2
            / (4 * np.pi * const.epsilon_0 * self.ion_mass * self.omega_z**2)
        ) ** (1 / 3)


@dataclass(frozen=True)
class IonChain:
    config: TrapConfig
    positions: np.ndarray
    mode_freqs: np.ndarray
    mode_matrix: np.ndarray  # [ion j, mode k]
    lamb_dicke: np.ndarray = field(repr=False)

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    @property
    def n_modes(self) -> int:
        return len(self.mode_freqs)

    @property
    def gate_ions(self) -> tuple[int, int]:
        return self.config.gate_ions

    def detunings(self, mu: float) -> np.ndarray:
        return self.mode_freqs - mu

    def to_csv_rows(self) -> list[list[float]]:
        rows = []
        for k in range(self.n_ions):
            rows.append(
                [k, self.mode_freqs[k], self.lamb_dicke[k], *self.mode_matrix[:, k]]
            )
        return rows

    def csv_header(self) -> list[str]:
        return ["k", "omega_k_rad_s", "eta_k"] + [f"b_{j}" for j in range(self.n_ions)]


def _forces(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, np.inf)
    coulomb = np.sign(diff) / diff**2
    return -u + coulomb.sum(axis=1)


def _force_jacobian(u: np.ndarray) -> np.ndarray:
    diff = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diff, np.inf)
    off = 2.0 / diff**3
    jac = off.copy()
    np.fill_diagonal(jac, -1.0 - off.sum(axis=1))
    return jac


def equilibrium_positions(
    cfg: TrapConfig,
    initial_guess: np.ndarray | None = None,
    max_iter: int = 200,
    tol: float = 1e-13,
) -> np.ndarray:
    """Equilibrium axial positions in meters, sorted ascending.

    Solves the dimensionless force balance ``u_i = sum_j sign(u_i - u_j)/(u_i - u_j)^2``
    with a damped Newton iteration. ``initial_guess`` is in units of the
    length scale; the default is uniform spacing.
    """
    n = cfg.ion_count
    ell = cfg.length_scale
    if n == 1:
        return np.zeros(1)
    if initial_guess is None:
        spacing = 2.018 / n**0.559
        u = spacing * (np.arange(n) - (n - 1) / 2)
    else:
        u = np.sort(np.asarray(initial_guess, dtype=float))
        if len(u) != n:
            raise ValueError("initial guess must have one entry per ion")

    def merit(x):
        return np.linalg.norm(_forces(x))

    res = merit(u)
    for _ in range(max_iter):
        if res < tol:
            break
        step = np.linalg.solve(_force_jacobian(u), -_forces(u))
        lam = 1.0
        while lam > 1e-6:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0) and merit(trial) < res:
                break
            lam *= 0.5
        else:
            raise ConvergenceError("damped Newton line search stalled", res)
        u = trial
        res = merit(u)
    if res >= tol:
        raise ConvergenceError(
            f"equilibrium solver did not converge in {max_iter} iterations", res
        )
    # remove the residual asymmetry left by floating point
    u = 0.5 * (u - u[::-1])
    return u * ell


def transverse_modes(
    cfg: TrapConfig, positions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Transverse mode frequencies (descending, COM first) and mode matrix ``b[j, k]``."""
    n = cfg.ion_count
    u = np.asarray(positions, dtype=float) / cfg.length_scale
    beta_sq = (cfg.omega_x / cfg.omega_z) ** 2
    if n == 1:
        hess = np.array([[beta_sq]])
    else:
        diff = np.abs(u[:, None] - u[None, :])
        np.fill_diagonal(diff, np.inf)
        inv3 = 1.0 / diff**3
        hess = inv3.copy()
        np.fill_diagonal(hess, beta_sq - inv3.sum(axis=1))
    evals, evecs = np.linalg.eigh(hess)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    for k, ev in enumerate(evals):
        if ev <= 0:
            raise StabilityError(k, ev * cfg.omega_z**2)
    # sign convention: first significant component positive
    for k in range(n):
        col = evecs[:, k]
        first = np.flatnonzero(np.abs(col) > 1e-9)[0]
        if col[first] < 0:
            evecs[:, k] = -col
    return cfg.omega_z * np.sqrt(evals), evecs


def lamb_dicke(cfg: TrapConfig, mode_freqs) -> np.ndarray:
    """eta_k = k_vec * sqrt(hbar / (2 m omega_k))."""
    mode_freqs = np.asarray(mode_freqs, dtype=float)
    if np.any(mode_freqs <= 0):
        raise ValueError("mode frequencies must be positive")
    return cfg.k_vec * np.sqrt(const.hbar / (2 * cfg.ion_mass * mode_freqs))


def build_chain(cfg: TrapConfig) -> IonChain:
    pos = equilibrium_positions(cfg)
    freqs, b = transverse_modes(cfg, pos)
    return IonChain(cfg, pos, freqs, b, lamb_dicke(cfg, freqs))
