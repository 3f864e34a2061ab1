"""``adaptchi <command> --config <file> [--out DIR] [--seed N] [--trace]``.

Exit codes: 0 success, 2 configuration error, 3 non-convergence (DMRG or
tuning), 4 a configured threshold was missed.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import bench
from .errors import ConfigError, NoUltimateGain

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_THRESHOLD = 4

log = logging.getLogger("adaptchi")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptchi", description="Adaptive bond-dimension DMRG benchmarks")
    p.add_argument("command", choices=[c.replace("_", "-") for c in bench.EXPERIMENTS]
                   + list(bench.EXPERIMENTS))
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--trace", action="store_true", help="write controller_trace.csv")
    p.add_argument("--repetitions", type=int, help="timed runs per arm")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args, command: str) -> dict:
    over: dict = {"experiment": command}
    if args.out is not None:
        over["output_dir"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    if args.repetitions is not None:
        over["repetitions"] = args.repetitions
    if args.trace:
        over["dmrg"] = {"trace": True}
    return over


def _adaptive_records(result) -> list:
    if isinstance(result, bench.BenchmarkRecord):
        return [result]
    if isinstance(result, list) and result and isinstance(result[0], tuple):
        return [adaptive for _, adaptive in result]
    if isinstance(result, list):
        return [r for r in result if r.label != "fixed"]
    return []


def check_thresholds(cfg: bench.ExperimentConfig, result) -> list[str]:
    """Human-readable list of missed gates (empty when everything passed)."""
    t = cfg.thresholds
    missed = []
    for rec in _adaptive_records(result) if isinstance(result, (list, bench.BenchmarkRecord)) else []:
        if "min_speedup" in t and rec.speedup is not None and rec.speedup < t["min_speedup"]:
            missed.append(f"{rec.label}: speedup {rec.speedup:.3g} < {t['min_speedup']}")
        if "max_delta_e" in t and rec.delta_e_baseline is not None \
                and abs(rec.delta_e_baseline) > t["max_delta_e"]:
            missed.append(f"{rec.label}: |dE/N| {abs(rec.delta_e_baseline):.3g} > {t['max_delta_e']}")
        if "max_average_chi" in t and rec.average_chi > t["max_average_chi"]:
            missed.append(f"{rec.label}: average chi {rec.average_chi:.3g} > {t['max_average_chi']}")
    if cfg.experiment == "svd_bench" and "exponent_range" in t:
        lo, hi = t["exponent_range"]
        if not lo <= result[1] <= hi:
            missed.append(f"scaling exponent {result[1]:.3g} outside [{lo}, {hi}]")
    if cfg.experiment == "stability_map" and t.get("all_stable") and not all(r.stable for r in result[0]):
        missed.append("some grid points are unstable")
    return missed


def _report(cfg, result) -> None:
    recs = _adaptive_records(result) if isinstance(result, (list, bench.BenchmarkRecord)) else []
    if cfg.experiment in ("ablate", "scan_hamiltonians", "scaling"):
        recs = result if cfg.experiment == "ablate" else [r for p in result for r in p]
    for r in recs:
        sp = "" if r.speedup is None else f" speedup={r.speedup:.2f}x"
        print(f"{r.label:>24}  E/N={r.energy_per_site:.10f}  t={r.median_wall:.3f}s{sp}"
              f"  sweeps={r.sweeps}  chi_avg={r.average_chi:.2f}  chi_max={r.max_chi_used}")
    if cfg.experiment == "tune_pid":
        g = result.tuned
        print(f"K_u={result.k_ultimate:g} T_u={result.t_ultimate:g} -> kp={g.kp:g} ki={g.ki:g} kd={g.kd:g}")
    elif cfg.experiment == "stability_map":
        print(f"max stable loop gain on grid: {result[1]:.6g}")
    elif cfg.experiment == "svd_bench":
        for chi, s in result[0]:
            print(f"chi={chi:5d}  {2 * chi}x{2 * chi}  {s:.6f}s")
        print(f"scaling exponent {result[1]:.3f}")
    print(f"artifacts in {cfg.output_dir}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.command.replace("-", "_")
    try:
        cfg = bench.load_config(args.config, _overrides(args, command))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = bench.COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoUltimateGain as exc:
        print(f"tuning failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    _report(cfg, result)
    recs = []
    if isinstance(result, bench.BenchmarkRecord):
        recs = [result]
    elif command in ("ablate",):
        recs = result
    elif command in ("scan_hamiltonians", "scaling"):
        recs = [r for p in result for r in p]
    if any(not r.converged for r in recs):
        print("warning: at least one run did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    missed = check_thresholds(cfg, result)
    if missed:
        for m in missed:
            print(f"threshold missed: {m}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
