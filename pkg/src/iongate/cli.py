"""Command-line front end: config handling, subcommands, CSV and SVG output."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import bounds as bnd
from .chain import ChainError, IonChain, TrapConfig, build_chain
from .master import (CutoffError, NoiseModel, SimConfig, SimulationError, certify_accuracy,
                     fidelity,
                     heating_free_simulate, ideal_unitary, ket, pure_state,
                     sequential_simulate)
from .pulse import Pulse, PulseError, optimize_amplitudes, theta

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2

RESULT_COLUMNS = [
    "N", "delta_min_hz", "tau_s", "omega_max_rad_s", "infid_sim", "bound_simple",
    "bound_improved", "bound_loose", "estimator", "diag_A", "infid_drift_pert",
    "infid_drift_exact", "fock_cutoff", "status",
]

CUTOFF_STEP, CUTOFF_MAX = 4, 22


class ConfigError(ValueError):
    pass


# -- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    n_ions: tuple[int, ...] = (2, 3, 4, 5, 6, 7)
    delta_min: tuple[float, ...] = tuple(2 * math.pi * 1e4 * i for i in range(1, 11))
    tau: tuple[float, ...] = (300e-6,)
    # 0 picks 4 N + 4 segments
    n_segments: int = 0
    robust: bool = True

    def __post_init__(self):
        for name in ("n_ions", "delta_min", "tau"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"sweep.{name} must not be empty")
        if any(n < 2 for n in self.n_ions):
            raise ConfigError("sweep.n_ions entries must be at least 2")
        if any(not d > 0 for d in self.delta_min):
            raise ConfigError("sweep.delta_min entries must be positive")
        if any(not t > 0 for t in self.tau):
            raise ConfigError("sweep.tau entries must be positive")
        if self.n_segments < 0:
            raise ConfigError("sweep.n_segments must be non-negative")

    def segments_for(self, n: int) -> int:
        return self.n_segments or 4 * n + 4

    def grid(self) -> list[tuple[int, float, float]]:
        return sorted((n, d, t) for n in self.n_ions for d in self.delta_min for t in self.tau)


@dataclass(frozen=True)
class NoiseConfig:
    model: str = "com_linear"
    gamma: float = 50.0
    channel: str = "heating"

    def __post_init__(self):
        if self.model not in ("com_linear", "uniform"):
            raise ConfigError(f"unknown noise model {self.model!r}")
        if self.channel not in ("heating", "dephasing", "both"):
            raise ConfigError(f"unknown noise channel {self.channel!r}")
        if not self.gamma >= 0:
            raise ConfigError("noise.gamma must be non-negative")

    def build(self, n: int) -> NoiseModel:
        factory = NoiseModel.com_linear if self.model == "com_linear" else NoiseModel.uniform
        return factory(n, self.gamma, self.channel)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    plots: bool = False


@dataclass(frozen=True)
class RunConfig:
    trap: TrapConfig = field(default_factory=TrapConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    drift: bnd.DriftConfig = field(default_factory=bnd.DriftConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    # reserved, every algorithm here is deterministic
    seed: int = 0


_SECTION_TYPES = {
    "trap": TrapConfig, "sweep": SweepConfig, "noise": NoiseConfig,
    "sim": SimConfig, "drift": bnd.DriftConfig, "output": OutputConfig,
}


def _section_from_dict(cls, name: str, data: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        default = getattr(defaults, key)
        if isinstance(default, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"{name}.{key} must be a list")
            value = tuple(type(default[0])(v) if default else v for v in value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{name}.{key} must be true or false")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name}.{key} must be a number")
            value = float(value)
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name}.{key} must be an integer")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    seed = data.pop("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        body = data.get(name, {})
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table")
        sections[name] = _section_from_dict(cls, name, body)
    return RunConfig(seed=seed, **sections)


def config_to_dict(cfg: RunConfig) -> dict:
    out: dict = {"seed": cfg.seed}
    for name in _SECTION_TYPES:
        section = {}
        for f in dataclasses.fields(getattr(cfg, name)):
            value = getattr(getattr(cfg, name), f.name)
            if isinstance(value, tuple):
                value = [v.item() if isinstance(v, np.generic) else v for v in value]
            elif isinstance(value, np.generic):
                value = value.item()
            section[f.name] = value
        out[name] = section
    return out


def loads_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return config_from_dict(data)


def dumps_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


# -- CSV helpers --------------------------------------------------------------------


def fmt(x) -> str:
    """Shortest round-trip scientific notation for floats, plain digits for ints."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or not np.isfinite(x):
        return "nan" if x is None or np.isnan(x) else ("inf" if x > 0 else "-inf")
    return np.format_float_scientific(float(x), unique=True, trim="-")


def write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_pulse(path: Path, pulse: Pulse) -> None:
    write_csv(path, ["tau_s", "mu_rad_s", "n_segments"],
              [[pulse.duration, pulse.mu, pulse.n_segments]] + [[a] for a in pulse.amplitudes])


def read_pulse(path: str | os.PathLike) -> Pulse:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"pulse file {path} does not exist")
    try:
        header, rows = read_csv(path)
        if header != ["tau_s", "mu_rad_s", "n_segments"]:
            raise ValueError(f"unexpected header {header}")
        tau, mu, m = float(rows[0][0]), float(rows[0][1]), int(rows[0][2])
        amps = np.array([float(r[0]) for r in rows[1:]])
        if len(amps) != m:
            raise ValueError(f"expected {m} amplitudes, found {len(amps)}")
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed pulse file {path}: {exc}") from exc
    symmetric = m % 2 == 0 and np.array_equal(amps, amps[::-1])
    return Pulse(amps, tau, mu, symmetric=symmetric)


def pulse_filename(n: int, delta_min: float, tau: float) -> str:
    return f"pulse_N{n}_dmin{delta_min / (2 * np.pi):g}_tau{tau * 1e6:g}.csv"


# -- computations shared by the subcommands ----------------------------------------


def chain_for(cfg: RunConfig, n: int) -> IonChain:
    return build_chain(dataclasses.replace(cfg.trap, ion_count=n))


def synthesize(cfg: RunConfig, chain: IonChain, delta_min: float, tau: float) -> Pulse:
    return optimize_amplitudes(chain, tau=tau, delta_min=delta_min,
                               n_segments=cfg.sweep.segments_for(chain.n_ions),
                               robust=cfg.sweep.robust)


def to_hz(omega: float) -> float:
    """Angular to ordinary frequency, rounded past the 2*pi round-trip noise."""
    return float(f"{omega / (2 * np.pi):.12g}")


def gate_infidelity(chain: IonChain, pulse: Pulse, noise: NoiseModel, sim: SimConfig):
    """Noisy final state, noise-free reference, ``1 - F`` and the Fock cutoff used.

    On Fock leakage the cutoff is raised in steps of ``CUTOFF_STEP`` up to
    ``CUTOFF_MAX`` before the error is allowed through.
    """
    rho0 = pure_state(ket("00"))
    while True:
        try:
            noisy = sequential_simulate(rho0, chain, pulse, noise, sim)
            ideal = heating_free_simulate(rho0, chain, pulse, sim)
            return noisy, ideal, 1.0 - fidelity(noisy, ideal), sim.fock_cutoff
        except CutoffError:
            if sim.fock_cutoff + CUTOFF_STEP > CUTOFF_MAX:
                raise
            sim = dataclasses.replace(sim, fock_cutoff=sim.fock_cutoff + CUTOFF_STEP)


def sweep_point(cfg: RunConfig, n: int, delta_min: float, tau: float,
                certify: bool = False) -> tuple[list, float]:
    """One results row and the simulation wall time."""
    row = [n, to_hz(delta_min), tau] + [math.nan] * 10
    runtime = math.nan
    try:
        chain = chain_for(cfg, n)
        stored = Path(cfg.output.directory) / "pulses" / pulse_filename(n, delta_min, tau)
        pulse = read_pulse(stored) if stored.is_file() else synthesize(cfg, chain, delta_min, tau)
        noise = cfg.noise.build(n)
        start = time.perf_counter()
        _, _, infid, cutoff = gate_infidelity(chain, pulse, noise, cfg.sim)
        runtime = time.perf_counter() - start
        if certify:
            certify_accuracy(pure_state(ket("00")), chain, pulse, noise,
                             dataclasses.replace(cfg.sim, fock_cutoff=cutoff))
        rep = bnd.error_report(pulse, chain, noise, infid)
        xi = cfg.drift.xi_omega
        row[3:] = [
            pulse.max_amplitude, infid, rep.simple_bound, rep.improved_bound,
            rep.loose_bound, rep.heating_estimator, rep.trajectory_diag_A,
            bnd.freq_drift_delta(pulse, chain, xi_omega=xi),
            bnd.freq_drift_exact(pulse, chain, xi_omega=xi), cutoff,
            "ok" if not rep.warnings else "open_trajectory",
        ]
    except (ChainError, PulseError, SimulationError, ValueError) as exc:
        row[-1] = f"failed: {type(exc).__name__}"
    return row, runtime


def _pool_map(fn, args: list[tuple], jobs: int):
    """Ordered parallel map; ``jobs <= 1`` runs in-process."""
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def power_law_fit(x, y) -> tuple[float, float]:
    """Least-squares ``y = c x^p`` in log space; returns ``(p, c)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan, math.nan
    p, logc = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    return float(p), float(np.exp(logc))


def tau_scaling(rows: list[list]) -> list[list]:
    """Per N: exponent of the mean rescaled infidelity ``(1 - F)/Omega_max^2`` versus tau."""
    out = []
    for n in sorted({r[0] for r in rows}):
        taus = sorted({r[2] for r in rows if r[0] == n})
        means = []
        for tau in taus:
            vals = [r[4] / r[3] ** 2 for r in rows
                    if r[0] == n and r[2] == tau and np.isfinite(r[4]) and r[3] > 0]
            means.append(np.mean(vals) if vals else math.nan)
        p, c = power_law_fit(taus, means)
        out.append([n, len(taus), p, c])
    return out


def linear_fit(x, y) -> tuple[float, float, float]:
    """``y = a + b x``; returns ``(a, b, max relative residual)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    b, a = np.polyfit(x, y, 1)
    pred = a + b * x
    return float(a), float(b), float(np.max(np.abs(y - pred) / pred))


def benchmark(cfg: RunConfig, n_values, n_segments: int, repeats: int = 3):
    """Wall time of the sequential simulation with the segment count held fixed."""
    out = []
    delta_min, tau = cfg.sweep.delta_min[0], cfg.sweep.tau[0]
    rho0 = pure_state(ket("00"))
    for i, n in enumerate(n_values):
        chain = chain_for(cfg, n)
        pulse = optimize_amplitudes(chain, tau=tau, delta_min=delta_min,
                                    n_segments=n_segments, robust=cfg.sweep.robust)
        noise = cfg.noise.build(n)
        if i == 0:
            # untimed warm-up, otherwise the first point also pays for cold caches
            sequential_simulate(rho0, chain, pulse, noise, cfg.sim)
        best = math.inf
        for _ in range(repeats):
            start = time.perf_counter()
            sequential_simulate(rho0, chain, pulse, noise, cfg.sim)
            best = min(best, time.perf_counter() - start)
        out.append((n, best))
    return out


# -- plots --------------------------------------------------------------------------


def _figure(ncols=1, width=5.0):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "iongate"
    fig, axes = plt.subplots(1, ncols, figsize=(width * ncols, 3.8), squeeze=False)
    return fig, axes[0]


def _save(fig, path: Path):
    import matplotlib.pyplot as plt

    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_infidelity_vs_n(rows, path: Path):
    fig, (ax,) = _figure(width=6)
    ok = [r for r in rows if np.isfinite(r[4])]
    ns = sorted({r[0] for r in ok})
    ax.scatter([r[0] for r in ok], [r[4] for r in ok], s=10, c="0.5", label="simulated")
    for col, label in ((4, "simulated mean"), (6, "improved bound"), (8, "estimator"),
                       (5, "simple bound")):
        ax.plot(ns, [np.mean([r[col] for r in ok if r[0] == n]) for n in ns], marker="o",
                label=label)
    ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("1 - F")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_tau_scaling(rows, fits, path: Path):
    fig, (ax,) = _figure(width=6)
    for n, _, p, c in fits:
        sub = [r for r in rows if r[0] == n and np.isfinite(r[4]) and r[3] > 0]
        taus = np.array([r[2] for r in sub])
        ax.scatter(taus * 1e6, [r[4] / r[3] ** 2 for r in sub], s=8, alpha=0.5)
        if np.isfinite(p):
            grid = np.linspace(taus.min(), taus.max(), 50)
            ax.plot(grid * 1e6, c * grid**p, label=f"N={n}, p={p:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("tau (us)")
    ax.set_ylabel("(1 - F) / Omega_max^2  (s^2)")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_runtime(points, path: Path):
    fig, (ax,) = _figure()
    ns = [p[0] for p in points]
    ts = [p[1] for p in points]
    ax.plot(ns, ts, "o", label="measured")
    if len(points) >= 2:
        a, b, _ = linear_fit(ns, ts)
        ax.plot(ns, a + b * np.asarray(ns), "-", label=f"{a:.3g} + {b:.3g} N")
    ax.set_xlabel("N")
    ax.set_ylabel("runtime (s)")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_trajectory(pulse: Pulse, t, alphas, path: Path):
    n = len(alphas)
    fig, axes = _figure(ncols=n + 1, width=3.2)
    for k, ax in enumerate(axes[:n]):
        ax.plot(alphas[k].real, alphas[k].imag, lw=0.8)
        ax.plot([0], [0], "k+")
        ax.set_title(f"mode {k}", fontsize=8)
        ax.set_xlabel("Re alpha")
        ax.set_ylabel("Im alpha")
        ax.set_aspect("equal", adjustable="datalim")
    ax = axes[n]
    ax.plot(t * 1e6, np.abs(pulse.amplitude_at(np.minimum(t, pulse.duration * (1 - 1e-12))))
            / (2 * np.pi * 1e3), drawstyle="steps-post")
    ax.set_xlabel("t (us)")
    ax.set_ylabel("|Omega| / 2pi (kHz)")
    _save(fig, path)


# -- subcommands ---------------------------------------------------------------------


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plots(cfg: RunConfig, args) -> bool:
    return bool(args.plots or cfg.output.plots)


def _require_pulse(args) -> Pulse:
    if not args.pulse:
        raise ConfigError("this command needs --pulse <file>")
    return read_pulse(args.pulse)


def cmd_modes(cfg, args) -> int:
    chain = build_chain(cfg.trap)
    out = _out_dir(cfg, args) / f"modes_N{chain.n_ions}.csv"
    write_csv(out, chain.csv_header(), chain.to_csv_rows())
    return EXIT_OK


def cmd_optimize(cfg, args) -> int:
    out = _out_dir(cfg, args)
    summary = []
    for n, dmin, tau in cfg.sweep.grid():
        m = cfg.sweep.segments_for(n)
        try:
            chain = chain_for(cfg, n)
            pulse = synthesize(cfg, chain, dmin, tau)
            write_pulse(out / "pulses" / pulse_filename(n, dmin, tau), pulse)
            summary.append([n, to_hz(dmin), tau, m, pulse.max_amplitude,
                            theta(pulse, chain), "ok"])
        except (ChainError, PulseError) as exc:
            summary.append([n, to_hz(dmin), tau, m, math.nan, math.nan,
                            f"failed: {type(exc).__name__}"])
    write_csv(out / "optimize_summary.csv",
              ["N", "delta_min_hz", "tau_s", "n_segments", "omega_max_rad_s", "theta", "status"],
              summary)
    return EXIT_OK if any(r[-1] == "ok" for r in summary) else EXIT_NUMERIC


def cmd_simulate(cfg, args) -> int:
    pulse = _require_pulse(args)
    chain = build_chain(cfg.trap)
    noise = cfg.noise.build(chain.n_ions)
    noisy, ideal, infid, _ = gate_infidelity(chain, pulse, noise, cfg.sim)
    u = ideal_unitary(theta(pulse, chain))
    rho0 = pure_state(ket("00"))
    out = _out_dir(cfg, args)
    write_csv(out / "simulate.csv",
              ["N", "theta", "infid_sim", "infid_ideal_gate", "infid_noisy_vs_target"],
              [[chain.n_ions, theta(pulse, chain), infid,
                1 - fidelity(ideal, u @ rho0 @ u.conj().T),
                1 - fidelity(noisy, u @ rho0 @ u.conj().T)]])
    write_csv(out / "state.csv", ["row", "col", "re", "im"],
              [[i, j, noisy[i, j].real, noisy[i, j].imag] for i in range(4) for j in range(4)])
    return EXIT_OK


def cmd_bounds(cfg, args) -> int:
    pulse = _require_pulse(args)
    chain = build_chain(cfg.trap)
    noise = cfg.noise.build(chain.n_ions)
    infid = gate_infidelity(chain, pulse, noise, cfg.sim)[2] if args.with_sim else None
    rep = bnd.error_report(pulse, chain, noise, infid)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    write_csv(_out_dir(cfg, args) / "bounds.csv",
              ["simple_bound", "improved_bound", "loose_bound", "heating_estimator",
               "diag_A", "infid_sim"],
              [[rep.simple_bound, rep.improved_bound, rep.loose_bound, rep.heating_estimator,
                rep.trajectory_diag_A, rep.simulated_infidelity]])
    return EXIT_OK


def cmd_drift(cfg, args) -> int:
    pulse = _require_pulse(args)
    chain = build_chain(cfg.trap)
    xi, xr = cfg.drift.xi_omega, cfg.drift.xi_rabi
    th = theta(pulse, chain)
    write_csv(_out_dir(cfg, args) / "drift.csv",
              ["xi_omega_rad_s", "theta", "theta_drifted", "infid_drift_pert",
               "infid_drift_exact", "infid_drift_gate", "xi_rabi", "infid_rabi_pert",
               "infid_rabi_exact"],
              [[xi, th, bnd.theta_drifted(pulse, chain, xi_omega=xi),
                bnd.freq_drift_delta(pulse, chain, xi_omega=xi),
                bnd.freq_drift_exact(pulse, chain, xi_omega=xi),
                bnd.drift_gate_infidelity(pulse, chain, xi), xr,
                bnd.rabi_drift_infidelity(xr), bnd.rabi_drift_exact(th, xr)]])
    return EXIT_OK


def cmd_trajectory(cfg, args) -> int:
    from .pulse import alpha_at

    pulse = _require_pulse(args)
    chain = build_chain(cfg.trap)
    t = np.linspace(0.0, pulse.duration, args.samples)
    rows, traces = [], []
    for k in range(chain.n_ions):
        for j in chain.gate_ions:
            a = np.atleast_1d(alpha_at(pulse, chain, j, k, t))
            if j == chain.gate_ions[0]:
                traces.append(a)
            rows.extend([k, j, ti, ai.real, ai.imag] for ti, ai in zip(t, a))
    out = _out_dir(cfg, args)
    write_csv(out / "trajectory.csv", ["k", "j", "t_s", "re_alpha", "im_alpha"], rows)
    if _plots(cfg, args):
        plot_trajectory(pulse, t, traces, out / "trajectory.svg")
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    out = _out_dir(cfg, args)
    # stored pulses are looked up next to the results
    cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, directory=str(out)))
    jobs = args.jobs or os.cpu_count() or 1
    # the first point is certified against an independent integration
    work = [(cfg, n, d, t, i == 0) for i, (n, d, t) in enumerate(cfg.sweep.grid())]
    results = _pool_map(sweep_point, work, jobs)
    rows = [r for r, _ in results]
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    write_csv(out / "timing.csv", ["N", "delta_min_hz", "tau_s", "runtime_s"],
              [r[:3] + [rt] for r, rt in results])
    ok = [r for r in rows if not r[-1].startswith("failed")]
    fits = tau_scaling(ok) if len(cfg.sweep.tau) > 1 else []
    if fits:
        write_csv(out / "tau_fit.csv", ["N", "n_tau", "exponent_p", "prefactor"], fits)
    if _plots(cfg, args) and ok:
        plot_infidelity_vs_n(ok, out / "infidelity_vs_n.svg")
        if fits:
            plot_tau_scaling(ok, fits, out / "tau_scaling.svg")
        timing = {}
        for (r, rt) in results:
            if np.isfinite(rt):
                timing.setdefault(r[0], []).append(rt)
        plot_runtime([(n, float(np.mean(v))) for n, v in sorted(timing.items())],
                     out / "runtime_vs_n.svg")
    for r in rows:
        if r[-1].startswith("failed"):
            print(f"point N={r[0]} delta_min={fmt(r[1])} Hz tau={fmt(r[2])} s {r[-1]}",
                  file=sys.stderr)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_bench(cfg, args) -> int:
    n_values = sorted(cfg.sweep.n_ions)
    m = cfg.sweep.n_segments or 4 * max(n_values) + 4
    points = benchmark(cfg, n_values, m, repeats=args.repeats)
    out = _out_dir(cfg, args)
    write_csv(out / "bench.csv", ["N", "n_segments", "runtime_s"], [[n, m, t] for n, t in points])
    if len(points) >= 2:
        a, b, resid = linear_fit(*zip(*points))
        write_csv(out / "bench_fit.csv", ["intercept_s", "slope_s", "max_rel_residual",
                                          "ratio_last_first"],
                  [[a, b, resid, points[-1][1] / points[0][1]]])
    if _plots(cfg, args):
        plot_runtime(points, out / "runtime_vs_n.svg")
    return EXIT_OK


COMMANDS = {
    "modes": cmd_modes, "optimize": cmd_optimize, "simulate": cmd_simulate,
    "bounds": cmd_bounds, "drift": cmd_drift, "sweep": cmd_sweep,
    "trajectory": cmd_trajectory, "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iongate",
        description="Noisy two-qubit gate simulation and error bounds for trapped-ion chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML run configuration (defaults if omitted)")
        p.add_argument("--out", help="output directory (overrides [output] directory)")
        p.add_argument("--jobs", type=int, default=0, help="worker processes for sweeps")
        p.add_argument("--plots", action="store_true", help="also write SVG figures")
        if name in ("simulate", "bounds", "drift", "trajectory"):
            p.add_argument("--pulse", help="pulse CSV written by 'optimize'")
        if name == "bounds":
            p.add_argument("--with-sim", action="store_true",
                           help="also simulate and report the infidelity")
        if name == "trajectory":
            p.add_argument("--samples", type=int, default=501)
        if name == "bench":
            p.add_argument("--repeats", type=int, default=3)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.jobs < 0:
            raise ConfigError("--jobs must be non-negative")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ChainError, PulseError, SimulationError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
