"""Phase-space trajectories and amplitudes of the best and worst N=2 pulses across delta_min."""

import argparse
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from iongate import cli
from iongate.pulse import alpha_at


@dataclass(frozen=True)
class Config:
    n_ions: int = 2
    delta_min_khz: tuple[float, ...] = tuple(10.0 * i for i in range(1, 11))
    tau: float = 300e-6
    gamma: float = 50.0
    samples: int = 601
    out: Path = Path("out/pulse_trajectories")


def run(cfg: Config):
    run_cfg = cli.RunConfig(noise=cli.NoiseConfig(gamma=cfg.gamma))
    chain = cli.chain_for(run_cfg, cfg.n_ions)
    noise = run_cfg.noise.build(cfg.n_ions)
    scored = []
    for d in cfg.delta_min_khz:
        pulse = cli.synthesize(run_cfg, chain, 2 * math.pi * 1e3 * d, cfg.tau)
        infid = cli.gate_infidelity(chain, pulse, noise, run_cfg.sim)[2]
        scored.append((infid, d, pulse))
        print(f"delta_min = {d:5.0f} kHz  1-F = {infid:.3e}  Omega_max = {pulse.max_amplitude:.3e}")
    scored.sort(key=lambda s: s[0])
    return chain, scored[-1], scored[0]


def plot(cfg: Config, chain, worst, best) -> None:
    fig, axes = cli._figure(ncols=chain.n_ions + 1, width=4.0)
    t = np.linspace(0.0, cfg.tau, cfg.samples)
    j = chain.gate_ions[0]
    for infid, d, pulse in (worst, best):
        label = f"{d:g} kHz, 1-F = {infid:.2e}"
        for k in range(chain.n_ions):
            a = alpha_at(pulse, chain, j, k, t)
            axes[k].plot(a.real, a.imag, label=label)
            axes[k].set_title(f"mode {k}")
            axes[k].set_xlabel("Re alpha")
            axes[k].set_ylabel("Im alpha")
        axes[-1].step(np.arange(pulse.n_segments), np.abs(pulse.amplitudes), where="mid",
                      label=label)
    axes[-1].set_xlabel("segment")
    axes[-1].set_ylabel("|Omega| (rad/s)")
    for ax in axes:
        ax.legend(fontsize=7)
    cfg.out.mkdir(parents=True, exist_ok=True)
    cli._save(fig, cfg.out / "trajectories.svg")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.parse_args()
    cfg = Config()
    chain, worst, best = run(cfg)
    print(f"largest 1-F {worst[0]:.3e} at {worst[1]:g} kHz, smallest {best[0]:.3e} at {best[1]:g} kHz")
    plot(cfg, chain, worst, best)


if __name__ == "__main__":
    main()
