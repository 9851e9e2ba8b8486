"""Simulated infidelity against the simple, improved and estimated bounds over N and delta_min.

Runs once for motional heating and once for dephasing and writes one CSV per
channel plus a figure of the median over delta_min per N.
"""

import argparse
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from iongate import cli


@dataclass(frozen=True)
class Config:
    n_ions: tuple[int, ...] = (2, 3, 4, 5, 6, 7)
    delta_min_khz: tuple[float, ...] = tuple(10.0 * i for i in range(1, 11))
    tau: float = 300e-6
    gamma: float = 50.0
    noise_model: str = "com_linear"
    channels: tuple[str, ...] = ("heating", "dephasing")
    jobs: int = 0
    out: Path = Path("out/bounds_vs_simulation")


def run(cfg: Config) -> dict[str, list[list]]:
    results = {}
    for channel in cfg.channels:
        run_cfg = cli.RunConfig(
            sweep=cli.SweepConfig(n_ions=cfg.n_ions,
                                  delta_min=tuple(2 * math.pi * 1e3 * d for d in cfg.delta_min_khz),
                                  tau=(cfg.tau,)),
            noise=cli.NoiseConfig(model=cfg.noise_model, gamma=cfg.gamma, channel=channel),
        )
        work = [(run_cfg, n, d, t) for n, d, t in run_cfg.sweep.grid()]
        rows = [r for r, _ in cli._pool_map(cli.sweep_point, work, cfg.jobs)]
        cli.write_csv(cfg.out / f"{channel}.csv", cli.RESULT_COLUMNS, rows)
        results[channel] = rows
    return results


def summarize(rows: list[list]) -> None:
    ok = [r for r in rows if r[-1] == "ok"]
    print(f"{'N':>3} {'sim':>10} {'simple/sim':>11} {'improved/sim':>13} {'est/sim':>8}")
    for n in sorted({r[0] for r in ok}):
        sel = [r for r in ok if r[0] == n]
        sim = np.array([r[4] for r in sel])
        ratio = lambda col: np.median(np.array([r[col] for r in sel]) / sim)
        print(f"{n:>3} {np.median(sim):>10.3e} {ratio(5):>11.1f} {ratio(6):>13.2f} "
              f"{ratio(8):>8.2f}")
    failed = len(rows) - len(ok)
    if failed:
        print(f"{failed} point(s) not ok")


def plot(results: dict[str, list[list]], path: Path) -> None:
    fig, axes = cli._figure(ncols=len(results), width=4.5)
    for ax, (channel, rows) in zip(axes, results.items()):
        ok = [r for r in rows if r[-1] == "ok"]
        ns = sorted({r[0] for r in ok})
        for col, label, style in ((5, "simple bound", "--"), (6, "improved bound", "-."),
                                  (8, "estimator", ":"), (4, "simulation", "-")):
            med = [np.median([r[col] for r in ok if r[0] == n]) for n in ns]
            ax.semilogy(ns, med, style, marker="o", label=label)
        ax.set_xlabel("N")
        ax.set_ylabel("1 - F (median over delta_min)")
        ax.set_title(channel)
        ax.legend(fontsize=7)
    cli._save(fig, path)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="N = 2, 3 and three detunings")
    parser.add_argument("--uniform", action="store_true", help="identical rates on every mode")
    parser.add_argument("--jobs", type=int, default=0)
    args = parser.parse_args()
    cfg = Config(jobs=args.jobs)
    if args.quick:
        cfg = dataclasses.replace(cfg, n_ions=(2, 3), delta_min_khz=(20.0, 50.0, 80.0))
    if args.uniform:
        cfg = dataclasses.replace(cfg, noise_model="uniform", out=cfg.out.with_name("uniform_noise"))
    results = run(cfg)
    for channel, rows in results.items():
        print(f"\n{channel}")
        summarize(rows)
    plot(results, cfg.out / "bounds_vs_n.svg")


if __name__ == "__main__":
    main()
