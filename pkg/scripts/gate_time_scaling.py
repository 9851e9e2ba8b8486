"""Rescaled infidelity (1 - F)/Omega_max^2 versus gate time, with a power-law fit per channel."""

import argparse
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from iongate import cli


@dataclass(frozen=True)
class Config:
    n_ions: int = 5
    taus_us: tuple[float, ...] = (300, 400, 500, 600, 700, 800, 900)
    delta_min_khz: tuple[float, ...] = tuple(10.0 * i for i in range(1, 11))
    gamma: float = 50.0
    channels: tuple[str, ...] = ("heating", "dephasing")
    jobs: int = 0
    out: Path = Path("out/gate_time_scaling")


def run(cfg: Config) -> dict[str, tuple[list, list]]:
    results = {}
    for channel in cfg.channels:
        run_cfg = cli.RunConfig(
            sweep=cli.SweepConfig(n_ions=(cfg.n_ions,),
                                  delta_min=tuple(2 * math.pi * 1e3 * d for d in cfg.delta_min_khz),
                                  tau=tuple(t * 1e-6 for t in cfg.taus_us)),
            noise=cli.NoiseConfig(gamma=cfg.gamma, channel=channel),
        )
        work = [(run_cfg, n, d, t) for n, d, t in run_cfg.sweep.grid()]
        rows = [r for r, _ in cli._pool_map(cli.sweep_point, work, cfg.jobs)]
        ok = [r for r in rows if not r[-1].startswith("failed")]
        fits = cli.tau_scaling(ok)
        cli.write_csv(cfg.out / f"{channel}.csv", cli.RESULT_COLUMNS, rows)
        cli.write_csv(cfg.out / f"{channel}_fit.csv", ["N", "n_tau", "exponent_p", "prefactor"],
                      fits)
        cli.plot_tau_scaling(ok, fits, cfg.out / f"{channel}.svg")
        results[channel] = (rows, fits)
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=Config.n_ions)
    parser.add_argument("--quick", action="store_true", help="three gate times, three detunings")
    parser.add_argument("--jobs", type=int, default=0)
    args = parser.parse_args()
    cfg = Config(n_ions=args.n, jobs=args.jobs)
    if args.quick:
        cfg = dataclasses.replace(cfg, taus_us=(300, 600, 900), delta_min_khz=(20.0, 50.0, 80.0))
    for channel, (rows, fits) in run(cfg).items():
        for n, count, p, c in fits:
            print(f"{channel:>9}: N={n} over {count} gate times, exponent p = {p:.3f}")


if __name__ == "__main__":
    main()
