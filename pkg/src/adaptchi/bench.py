"""Benchmark harness: experiment configs, repeated timed runs, CSV/JSON output.

An :class:`ExperimentConfig` is read from JSON. Keys mirror the dataclass
fields, nested for ``model`` and ``dmrg`` (and ``dmrg.controller``,
``dmrg.controller.gains``). Values given on the command line win over the file,
which wins over the defaults.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import statistics
import time
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import controller as ctl
from . import linalg
from .dmrg import DmrgConfig, DmrgResult, run_dmrg
from .errors import ConfigError, NoUltimateGain, SizeGuard, UnsupportedModel
from .models import ModelSpec, bethe_reference, bethe_reference_pauli, exact_ground_energy
from .mps import bond_entropies

SCHEMA_VERSION = 1
EXPERIMENTS = ("dmrg", "ablate", "scan_hamiltonians", "scaling", "tune_pid",
               "stability_map", "svd_bench")
COV_FLAG = 0.05
SWEEP_COLUMNS = ("sweep", "energy", "delta_e_rel", "max_chi", "avg_chi", "max_trunc_err", "wall_s")

DEFAULT_ROWS = (
    {"name": "heisenberg", "model": {"family": "heisenberg_xxz", "jz": 1.0}},
    {"name": "xxz_jz1.5", "model": {"family": "heisenberg_xxz", "jz": 1.5}},
    {"name": "ising_critical",
     "model": {"family": "transverse_ising", "jx": 0.0, "jy": 0.0, "jz": 1.0, "h": 1.0}},
    {"name": "ising_ordered",
     "model": {"family": "transverse_ising", "jx": 0.0, "jy": 0.0, "jz": 1.0, "h": 0.2}},
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment and everything needed to rerun it.

    Attributes:
        experiment: which command the config is meant for.
        model: Hamiltonian (ignored by the controller-only experiments).
        dmrg: solver and controller settings shared by all arms.
        repetitions: timed runs per arm; the median wall time is reported.
        output_dir: where artifacts are written.
        seed: seeds random initial states and random test matrices.
        baseline: optional comparison arm for ``dmrg`` (only ``"fixed"``).
        arms: controller modes compared by ``ablate``.
        rows: per-row model and controller overrides for ``scan_hamiltonians``.
        sizes: chain lengths for ``scaling``.
        plant: ``"saturated"``, ``"constant"`` or ``"dmrg"`` for ``tune_pid``.
        plant_entropy: entropy ceiling of the synthetic plants, in nats.
        kp_grid: proportional gains scanned by ``tune_pid``.
        tune_sweeps: closed-loop steps per scanned gain.
        g_grid: loop gains for ``stability_map``; empty means ``(0, 3/chi_star]``.
        chi_star: operating point of the stability map.
        chi_list: bond dimensions for ``svd_bench``.
        fit_min_chi: smallest chi entering the scaling fit; below it call
            overhead rather than the cubic term dominates.
        thresholds: optional pass/fail gates, e.g. ``{"min_speedup": 2.0}``.
    """

    experiment: str = "dmrg"
    model: ModelSpec = field(default_factory=ModelSpec)
    dmrg: DmrgConfig = field(default_factory=DmrgConfig)
    repetitions: int = 3
    output_dir: str = "results"
    seed: int = 0
    baseline: str | None = None
    arms: tuple = ("fixed", "pid", "threshold")
    rows: tuple = DEFAULT_ROWS
    sizes: tuple = (10, 20, 40)
    plant: str = "saturated"
    plant_entropy: float = 3.0
    kp_grid: tuple = tuple(float(k) for k in range(1, 65))
    tune_sweeps: int = 60
    g_grid: tuple = ()
    chi_star: int = 8
    chi_list: tuple = (32, 64, 128, 256, 512)
    fit_min_chi: int = 64
    thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.baseline not in (None, "fixed"):
            raise ConfigError("baseline must be null or 'fixed'")
        if self.plant not in ("saturated", "constant", "dmrg"):
            raise ConfigError(f"unknown plant {self.plant!r}")
        for arm in self.arms:
            if arm not in ctl.MODES:
                raise ConfigError(f"unknown arm {arm!r}")
        if any(g <= 0 for g in self.g_grid):
            raise ConfigError("g_grid values must be positive")

    def to_dict(self) -> dict:
        return _to_jsonable(self)

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir", None)
        # hash the emitted text form so 1.0 and 1 (after a round trip) agree
        blob = _json_text(_sorted(d))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- config parsing -------------------------------------------------------------


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_sorted(v) for v in obj]
    return obj


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown key {where!r}")
        sub = hints[key]
        if dataclasses.is_dataclass(sub):
            value = _build(sub, value, where)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config and apply ``overrides`` (nested dict) on top.

    Raises:
        ConfigError: unreadable file, malformed JSON (with line and column) or
            an unknown/invalid key.
    """
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if overrides:
        data = _merge(data, overrides)
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


# -- output helpers -----------------------------------------------------------


def fmt(x) -> str:
    """Decimal text with 17 significant digits for floats."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def _json_text(obj, indent: int = 0) -> str:
    # json.dumps would print floats in shortest-repr form; we want .17g
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json_text(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json_text(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (float, np.floating)):
        return "null" if not math.isfinite(obj) else format(float(obj), ".17g")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    return json.dumps(obj)


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_json_text(_to_jsonable(obj)) + "\n")


def write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_sweeps_csv(path: Path, result: DmrgResult, n: int) -> None:
    rows = [(r.sweep_index, r.energy, r.delta_e_rel, r.max_chi, r.average_chi,
             r.max_trunc_error, r.wall_time) for r in result.records]
    write_csv(path, SWEEP_COLUMNS, rows)


def write_trace_csv(path: Path, trace) -> None:
    rows = [tuple(getattr(t, c) for c in ctl.TRACE_COLUMNS) for t in trace]
    write_csv(path, ctl.TRACE_COLUMNS, rows)


# -- records --------------------------------------------------------------------


@dataclass
class BenchmarkRecord:
    experiment: str
    label: str
    config_hash: str
    wall_times: list[float]
    median_wall: float
    cov: float
    cov_flag: bool
    energy_per_site: float
    delta_e_oracle: float | None
    oracle: str | None
    speedup: float | None
    baseline: str | None
    average_chi: float
    max_chi_used: int
    sweeps: int
    converged: bool
    n: int = 0
    delta_e_baseline: float | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def coefficient_of_variation(times) -> float:
    if len(times) < 2:
        return 0.0
    mean = statistics.fmean(times)
    return statistics.pstdev(times) / mean if mean > 0 else 0.0


def oracle_energy(spec: ModelSpec) -> tuple[float | None, str | None]:
    """Exact reference energy when one is cheap enough, else ``(None, None)``."""
    if spec.family == "transverse_ising":
        return exact_ground_energy(spec, "free_fermion"), "free_fermion"
    try:
        return exact_ground_energy(spec), "exact_diagonalization"
    except SizeGuard:
        return None, None


def _timed_runs(spec: ModelSpec, dcfg: DmrgConfig, repetitions: int):
    results = [run_dmrg(spec, dcfg) for _ in range(repetitions)]
    return results, [r.wall_time for r in results]


def make_record(experiment: str, label: str, cfg_hash: str, spec: ModelSpec,
                results: list[DmrgResult], times: list[float], oracle=(None, None)) -> BenchmarkRecord:
    res = results[-1]
    e = res.energy / spec.n
    ref, ref_name = oracle
    cov = coefficient_of_variation(times)
    return BenchmarkRecord(
        experiment=experiment,
        label=label,
        config_hash=cfg_hash,
        wall_times=list(times),
        median_wall=float(statistics.median(times)),
        cov=cov,
        cov_flag=bool(cov >= COV_FLAG),
        energy_per_site=e,
        delta_e_oracle=None if ref is None else e - ref / spec.n,
        oracle=ref_name,
        speedup=None,
        baseline=None,
        average_chi=res.records[-1].average_chi,
        max_chi_used=max(r.max_chi for r in res.records),
        sweeps=res.sweeps,
        converged=res.converged,
        n=spec.n,
    )


def _compare(rec: BenchmarkRecord, base: BenchmarkRecord, name: str) -> None:
    rec.baseline = name
    rec.speedup = base.median_wall / rec.median_wall if rec.median_wall > 0 else math.inf
    rec.delta_e_baseline = rec.energy_per_site - base.energy_per_site


def _with_mode(dcfg: DmrgConfig, mode: str, **ctl_over) -> DmrgConfig:
    return replace(dcfg, controller=replace(dcfg.controller, mode=mode, **ctl_over))


def _seeded(cfg: ExperimentConfig) -> DmrgConfig:
    return replace(cfg.dmrg, seed=cfg.seed)


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _summary(cfg: ExperimentConfig, **payload) -> dict:
    return {"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment,
            "config_hash": cfg.config_hash, "config": cfg.to_dict(), **payload}


RECORD_COLUMNS = ("label", "n", "energy_per_site", "delta_e_oracle", "delta_e_baseline",
                  "median_wall", "cov", "cov_flag", "speedup", "sweeps", "average_chi",
                  "max_chi_used", "converged")


def _table(path: Path, records) -> None:
    write_csv(path, RECORD_COLUMNS, [tuple(getattr(r, c) for c in RECORD_COLUMNS) for r in records])


# -- commands -------------------------------------------------------------------


def cmd_dmrg(cfg: ExperimentConfig) -> BenchmarkRecord:
    """Timed DMRG runs of one configuration (plus the fixed arm if requested)."""
    out = _out(cfg)
    spec = cfg.model
    dcfg = _seeded(cfg)
    oracle = oracle_energy(spec)
    results, times = _timed_runs(spec, dcfg, cfg.repetitions)
    rec = make_record("dmrg", dcfg.controller.mode, cfg.config_hash, spec, results, times, oracle)
    base_rec = None
    if cfg.baseline == "fixed":
        b_results, b_times = _timed_runs(spec, _with_mode(dcfg, "fixed"), cfg.repetitions)
        base_rec = make_record("dmrg", "fixed", cfg.config_hash, spec, b_results, b_times, oracle)
        _compare(rec, base_rec, "fixed")
    final = results[-1]
    write_sweeps_csv(out / "sweeps.csv", final, spec.n)
    if dcfg.trace:
        write_trace_csv(out / "controller_trace.csv", final.trace)
    write_json(out / "summary.json", _summary(
        cfg, record=rec.to_dict(), baseline_record=None if base_rec is None else base_rec.to_dict(),
        chi_profile=final.records[-1].chi_profile,
        entropy_profile=final.records[-1].entropy_profile,
        monotonicity_violation=final.monotonicity_violation))
    return rec


def cmd_ablate(cfg: ExperimentConfig) -> list[BenchmarkRecord]:
    """Same model and settings under each controller mode in ``cfg.arms``."""
    out = _out(cfg)
    spec = cfg.model
    dcfg = _seeded(cfg)
    oracle = oracle_energy(spec)
    records = []
    for arm in cfg.arms:
        results, times = _timed_runs(spec, _with_mode(dcfg, arm), cfg.repetitions)
        records.append(make_record("ablate", arm, cfg.config_hash, spec, results, times, oracle))
    if "fixed" in cfg.arms:
        base = records[list(cfg.arms).index("fixed")]
        for r in records:
            _compare(r, base, "fixed")
    _table(out / "ablation.csv", records)
    write_json(out / "summary.json", _summary(cfg, records=[r.to_dict() for r in records]))
    return records


def row_spec(cfg: ExperimentConfig, row: dict) -> tuple[ModelSpec, DmrgConfig]:
    """Model and solver settings of one ``scan_hamiltonians`` row."""
    unknown = set(row) - {"name", "model", "controller"}
    if unknown:
        raise ConfigError(f"rows[{row.get('name')}]: unknown keys {sorted(unknown)}")
    model = _build(ModelSpec, _merge(cfg.model.to_dict(), row.get("model", {})), "rows.model")
    ctl_dict = _merge(_to_jsonable(cfg.dmrg.controller), row.get("controller", {}))
    controller = _build(ctl.ControllerConfig, ctl_dict, "rows.controller")
    return model, replace(_seeded(cfg), controller=controller)


def cmd_scan_hamiltonians(cfg: ExperimentConfig) -> list[tuple[BenchmarkRecord, BenchmarkRecord]]:
    """Fixed versus adaptive on each row of ``cfg.rows``."""
    out = _out(cfg)
    pairs = []
    for row in cfg.rows:
        spec, dcfg = row_spec(cfg, row)
        oracle = oracle_energy(spec)
        f_res, f_t = _timed_runs(spec, _with_mode(dcfg, "fixed"), cfg.repetitions)
        a_res, a_t = _timed_runs(spec, dcfg, cfg.repetitions)
        fixed = make_record("scan_hamiltonians", f"{row['name']}:fixed", cfg.config_hash, spec,
                            f_res, f_t, oracle)
        adaptive = make_record("scan_hamiltonians", f"{row['name']}:{dcfg.controller.mode}",
                               cfg.config_hash, spec, a_res, a_t, oracle)
        _compare(adaptive, fixed, "fixed")
        pairs.append((fixed, adaptive))
    _table(out / "hamiltonians.csv", [r for p in pairs for r in p])
    write_json(out / "summary.json", _summary(
        cfg, records=[r.to_dict() for p in pairs for r in p]))
    return pairs


def cmd_scaling(cfg: ExperimentConfig) -> list[tuple[BenchmarkRecord, BenchmarkRecord]]:
    """Fixed versus adaptive speedup for each chain length in ``cfg.sizes``."""
    out = _out(cfg)
    dcfg = _seeded(cfg)
    pairs = []
    for n in cfg.sizes:
        spec = replace(cfg.model, n=int(n))
        oracle = oracle_energy(spec)
        f_res, f_t = _timed_runs(spec, _with_mode(dcfg, "fixed"), cfg.repetitions)
        a_res, a_t = _timed_runs(spec, dcfg, cfg.repetitions)
        fixed = make_record("scaling", f"N{n}:fixed", cfg.config_hash, spec, f_res, f_t, oracle)
        adaptive = make_record("scaling", f"N{n}:{dcfg.controller.mode}", cfg.config_hash, spec,
                               a_res, a_t, oracle)
        _compare(adaptive, fixed, "fixed")
        pairs.append((fixed, adaptive))
    _table(out / "scaling.csv", [r for p in pairs for r in p])
    write_json(out / "summary.json", _summary(
        cfg, records=[r.to_dict() for p in pairs for r in p]))
    return pairs


def make_plant(cfg: ExperimentConfig):
    """Entropy response ``chi -> S`` used for Ziegler-Nichols tuning."""
    s_max = cfg.plant_entropy
    if cfg.plant == "saturated":
        return lambda chi: min(s_max, math.log(chi))
    if cfg.plant == "constant":
        return lambda chi: s_max
    spec = cfg.model
    if spec.n > 16:
        raise ConfigError("live DMRG plant is meant for small chains (n <= 16)")
    cache: dict[int, float] = {}
    base = _with_mode(_seeded(cfg), "fixed")

    def plant(chi: int) -> float:
        if chi not in cache:
            c = replace(base.controller, chi_max=int(chi), chi_min=min(base.controller.chi_min, int(chi)))
            res = run_dmrg(spec, replace(base, controller=c))
            cache[chi] = float(bond_entropies(res.mps)[spec.n // 2 - 1])
        return cache[chi]

    return plant


def cmd_tune_pid(cfg: ExperimentConfig) -> ctl.TuneReport:
    """Ziegler-Nichols scan; writes ``tune.json`` (also on failure, then re-raises)."""
    out = _out(cfg)
    plant = make_plant(cfg)
    ccfg = cfg.dmrg.controller
    try:
        rep = ctl.ziegler_nichols_tune(plant, cfg.kp_grid, cfg.tune_sweeps, ccfg)
    except NoUltimateGain as exc:
        write_json(out / "tune.json", _summary(cfg, status="no_ultimate_gain", message=str(exc),
                                               diagnostics=exc.diagnostics))
        raise
    write_json(out / "tune.json", _summary(
        cfg, status="ok", k_ultimate=rep.k_ultimate, t_ultimate=rep.t_ultimate,
        gains=dataclasses.asdict(rep.tuned), diagnostics=list(rep.scanned)))
    return rep


def stability_grid(cfg: ExperimentConfig) -> list[float]:
    if cfg.g_grid:
        return [float(g) for g in cfg.g_grid]
    g_top = 3.0 / cfg.chi_star
    return [g_top * k / 100 for k in range(1, 101)]


STABILITY_COLUMNS = ("g", "pole_min", "pole_max", "jury_a", "jury_b", "jury_c", "jury_stable",
                     "stable")


def cmd_stability_map(cfg: ExperimentConfig) -> tuple[list[ctl.StabilityReport], float]:
    """Jury and pole-modulus verdicts of the configured gains over a loop-gain grid."""
    out = _out(cfg)
    gains = cfg.dmrg.controller.gains
    grid = stability_grid(cfg)
    reports = [ctl.jury_stability(gains, g) for g in grid]
    write_csv(out / "stability.csv", STABILITY_COLUMNS,
              [(r.loop_gain, r.pole_moduli[0], r.pole_moduli[1], r.jury_a, r.jury_b, r.jury_c,
                r.jury_stable, r.stable) for r in reports])
    g_max = ctl.max_stable_gain(gains, grid)
    write_json(out / "summary.json", _summary(
        cfg, max_stable_gain=g_max, all_stable=all(r.stable for r in reports),
        gains=dataclasses.asdict(gains)))
    return reports, g_max


def time_svd(chi: int, repetitions: int, rng: np.random.Generator) -> float:
    """Median seconds for the SVD of one random complex ``2chi x 2chi`` matrix."""
    m = rng.standard_normal((2 * chi, 2 * chi)) + 1j * rng.standard_normal((2 * chi, 2 * chi))
    linalg.svd_full(m)  # warm-up
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        linalg.svd_full(m)
        times.append(time.perf_counter() - t0)
    return float(statistics.median(times))


def scaling_exponent(chis, seconds) -> float:
    """Slope of ``log(seconds)`` against ``log(chi)``."""
    return float(np.polyfit(np.log(np.asarray(chis, float)), np.log(np.asarray(seconds, float)), 1)[0])


def cmd_svd_bench(cfg: ExperimentConfig) -> tuple[list[tuple[int, float]], float]:
    out = _out(cfg)
    rng = np.random.default_rng(cfg.seed)
    rows = [(int(chi), time_svd(int(chi), cfg.repetitions, rng)) for chi in cfg.chi_list]
    fit = [r for r in rows if r[0] >= cfg.fit_min_chi]
    if len(fit) < 2:
        raise ConfigError("need at least two chi values >= fit_min_chi for the scaling fit")
    slope = scaling_exponent([r[0] for r in fit], [r[1] for r in fit])
    write_csv(out / "svd_bench.csv", ("chi", "rows", "cols", "median_s"),
              [(c, 2 * c, 2 * c, s) for c, s in rows])
    write_json(out / "summary.json", _summary(cfg, scaling_exponent=slope,
                                              timings=[{"chi": c, "median_s": s} for c, s in rows]))
    return rows, slope


COMMANDS = {
    "dmrg": cmd_dmrg,
    "ablate": cmd_ablate,
    "scan_hamiltonians": cmd_scan_hamiltonians,
    "scaling": cmd_scaling,
    "tune_pid": cmd_tune_pid,
    "stability_map": cmd_stability_map,
    "svd_bench": cmd_svd_bench,
}


def reference_energy_per_site(spec: ModelSpec) -> float:
    """Infinite-chain Heisenberg energy per site in the model's normalization."""
    if spec.family != "heisenberg_xxz" or (spec.jx, spec.jy, spec.jz) != (1.0, 1.0, 1.0):
        raise UnsupportedModel("the Bethe reference covers the isotropic Heisenberg chain only")
    return bethe_reference() if spec.convention == "spin_half" else bethe_reference_pauli()
