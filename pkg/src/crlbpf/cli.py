"""``crlbpf`` command line.

    crlbpf run|mc|bench|dp-curve [--config PATH] [--scenario NAME] [--gamma V[,V...]]
                                 [--runs N] [--horizon K] [--seed S] [--out DIR] [--workers W]
"""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import (
    SCENARIO_DEFAULTS, ExperimentConfig, cmd_bench, cmd_dp_curve, cmd_mc, cmd_run, config_fields,
)

log = logging.getLogger("crlbpf")

COMMANDS = {"run": cmd_run, "mc": cmd_mc, "bench": cmd_bench, "dp-curve": cmd_dp_curve}
# Per-command defaults applied before the config file and flags.
COMMAND_DEFAULTS = {
    "run": {"runs": 1},
    "mc": {"gamma": [9.0, 10.0, 11.0, 12.0, 13.0]},
    "dp-curve": {"gamma": [9.0, 10.0, 11.0, 12.0, 13.0]},
}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crlbpf", description="Privacy-preserving state estimation experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config (scenario or custom model plus experiment settings)")
    p.add_argument("--scenario", help="built-in scenario name or path to a model JSON")
    p.add_argument("--gamma", type=_floats, help="privacy threshold, or a comma-separated list")
    p.add_argument("--runs", type=int, help="Monte Carlo runs")
    p.add_argument("--horizon", type=int, help="number of steps after k = 0")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--workers", type=int, help="worker threads for Monte Carlo runs")
    p.add_argument("--window", type=int, dest="N_s", help="adversary window length N_s")
    p.add_argument("--sigma-floor", type=float, dest="sigma_floor", help="noise floor sigma")
    p.add_argument("--epsilon", type=_floats, dest="epsilon_grid", help="comma-separated epsilon grid")
    p.add_argument("--rho", type=float, help="adjacency radius for the sensitivity")
    p.add_argument("--bench-dims", type=_ints, dest="bench_dims", help="dim_x,dim_y,dim_d of the bench model")
    p.add_argument("--bench-k", type=_ints, dest="bench_k", help="comma-separated steps to time")
    p.add_argument("--repeats", type=int, dest="bench_repeats", help="timing repeats per point")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Merge settings; later sources win.

    Dataclass defaults, then command defaults, then built-in scenario
    defaults, then the config file, then explicit flags.
    """
    file_kw = config_fields(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "verbose") and v is not None}
    if "bench_dims" in flags:
        flags["bench_dims"] = tuple(flags["bench_dims"])
    scenario = flags.get("scenario", file_kw.get("scenario", "two_dim"))
    kw = dict(COMMAND_DEFAULTS.get(args.command, {}))
    if isinstance(scenario, str):
        kw.update(SCENARIO_DEFAULTS.get(scenario, {}))
    kw.update(file_kw)
    kw.update(flags)
    return ExperimentConfig(**kw)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        result = COMMANDS[args.command](cfg)
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    for path in result if isinstance(result, list) else [result]:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
