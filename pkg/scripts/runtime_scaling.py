"""Wall time of the sequential simulation versus ion count at a fixed segment count."""

import argparse
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from iongate import cli
from iongate.master import SimConfig


@dataclass(frozen=True)
class Config:
    n_ions: tuple[int, ...] = tuple(range(2, 13))
    n_segments: int = 52
    repeats: int = 1
    integrators: tuple[str, ...] = ("expm", "rk4")
    out: Path = Path("out/runtime_scaling")


def run(cfg: Config) -> dict[str, list[tuple[int, float]]]:
    results = {}
    for integrator in cfg.integrators:
        run_cfg = cli.RunConfig(sim=SimConfig(integrator=integrator))
        points = cli.benchmark(run_cfg, cfg.n_ions, cfg.n_segments, cfg.repeats)
        cli.write_csv(cfg.out / f"{integrator}.csv", ["N", "runtime_s"], [list(p) for p in points])
        results[integrator] = points
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="N up to 6, exact integrator only")
    args = parser.parse_args()
    cfg = Config()
    if args.quick:
        cfg = dataclasses.replace(cfg, n_ions=tuple(range(2, 7)), integrators=("expm",))
    for integrator, points in run(cfg).items():
        a, b, resid = cli.linear_fit(*zip(*points))
        ratio = points[-1][1] / points[0][1]
        print(f"{integrator}: t = {a:.2f} + {b:.2f} N s, max residual {resid:.1%}, "
              f"t(N={points[-1][0]})/t(N={points[0][0]}) = {ratio:.1f}")


if __name__ == "__main__":
    main()
