"""Experiment runner and command line entry point.

Subcommands::

    dynsched generate --config workload.toml --seed 3 --out wf.json
    dynsched run --config experiment.toml [--seed 0-29] [--out DIR] [--workers N]
    dynsched validate --workload wf.json --gantt run.gantt.json
    dynsched metrics --workload wf.json --gantt run.gantt.json

Results CSV columns (``results.csv``), one row per (seed, scheduler, policy)::

    workload_seed, scheduler, policy, k,
    total_makespan, mean_makespan, mean_flowtime, mean_utilization, scheduler_runtime,
    norm_total_makespan, norm_mean_makespan, norm_mean_flowtime, norm_mean_utilization,
    norm_scheduler_runtime

``norm_*`` divides by the smallest value among all variants run on the same
workload seed. ``scheduler_runtime`` and ``norm_scheduler_runtime`` are
wall-clock measurements and differ between machines and runs; every other
column is reproducible. ``summary.csv`` holds medians across seeds per variant.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .core import Assignment, Network, Schedule, TaskGraph, TaskId, validate_schedule
from .engine import Policy, SimulationError, SimulationResult, run_simulation
from .metrics import METRIC_NAMES, compute_metrics, normalize
from .schedulers import SCHEDULER_NAMES
from .workloads import WorkloadError, WorkloadSpec, generate_workload, load_workflow_json, save_workflow_json

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("dynsched")

OUT_ENV = "DYNSCHED_OUT"
DEFAULT_K = (2, 5, 10, 20)

RESULT_COLUMNS = (["workload_seed", "scheduler", "policy", "k"] + list(METRIC_NAMES)
                  + [f"norm_{m}" for m in METRIC_NAMES])
RUNTIME_COLUMNS = ("scheduler_runtime", "norm_scheduler_runtime")

EXIT_OK, EXIT_INVALID, EXIT_CONFIG, EXIT_SIMULATION, EXIT_IO = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One experiment sweep.

    ``workload`` is either a :class:`WorkloadSpec` (regenerated per seed) or a
    path to a workflow JSON file (same instance for every seed; the seed then
    only drives the random scheduler).
    """

    workload: "WorkloadSpec | Path" = field(default_factory=WorkloadSpec)
    schedulers: List[str] = field(default_factory=lambda: ["heft"])
    policies: List[Policy] = field(default_factory=lambda: [Policy.preemptive(), Policy.non_preemptive()])
    seeds: List[int] = field(default_factory=lambda: [0])
    out: Path = Path("results")
    workers: int = 1
    emit_gantt: bool = False
    emit_events: bool = False
    validate: bool = True

    def __post_init__(self):
        if not self.schedulers or not self.policies or not self.seeds:
            raise ConfigError("schedulers, policies and seeds must be nonempty")
        for s in self.schedulers:
            if s not in SCHEDULER_NAMES:
                raise ConfigError(f"unknown scheduler {s!r}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        d = dict(d)
        known = {"workload", "schedulers", "policies", "k_values", "seeds", "out", "workers",
                 "emit_gantt", "emit_events", "validate"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            wl = d.get("workload", {})
            if isinstance(wl, str):
                workload = (base_dir / wl)
            elif isinstance(wl, dict) and "path" in wl:
                workload = base_dir / wl["path"]
            else:
                workload = WorkloadSpec.from_dict(wl)
            # "KP" expands to one Last-K variant per entry of k_values.
            policies = []
            for p in d.get("policies", ["P", "NP", "KP"]):
                if str(p).upper() == "KP":
                    for k in d.get("k_values", DEFAULT_K):
                        if int(k) <= 0:
                            raise ConfigError("k_values must be positive")
                        policies.append(Policy.last_k(int(k)))
                else:
                    policies.append(Policy.parse(p))
            seeds = d.get("seeds", [0])
            seeds = parse_seeds(seeds) if isinstance(seeds, str) else [int(s) for s in seeds]
            return cls(
                workload=workload,
                schedulers=[s.lower() for s in d.get("schedulers", ["heft"])],
                policies=list(dict.fromkeys(policies)),
                seeds=seeds,
                out=Path(d.get("out") or os.environ.get(OUT_ENV, "results")),
                workers=int(d.get("workers", 1)),
                emit_gantt=bool(d.get("emit_gantt", False)),
                emit_events=bool(d.get("emit_events", False)),
                validate=bool(d.get("validate", True)),
            )
        except (WorkloadError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def parse_seeds(text: str) -> List[int]:
    """``"0,3,5"`` or ``"0-29"`` or a mix of both."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError(f"no seeds in {text!r}")
    return seeds


def read_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def gantt_entries(result: SimulationResult) -> List[dict]:
    entries = [{"task": t.local_id, "graph": t.graph_index, "node": a.node, "start": a.start, "finish": a.finish}
               for t, a in result.schedule.items()]
    entries.sort(key=lambda e: (e["node"], e["start"], e["graph"], e["task"]))
    return entries


def emit_gantt(result: SimulationResult, path) -> None:
    """Write the final schedule as a JSON array sorted by (node, start)."""
    Path(path).write_text(json.dumps(gantt_entries(result), indent=1))


def load_gantt(path) -> Schedule:
    schedule = {}
    for e in json.loads(Path(path).read_text()):
        t = TaskId(int(e["graph"]), int(e["task"]))
        schedule[t] = Assignment(t, str(e["node"]), float(e["start"]), float(e["finish"]))
    return schedule


def _workload_for(config: ExperimentConfig, seed: int) -> Tuple[Network, List[TaskGraph]]:
    if isinstance(config.workload, WorkloadSpec):
        return generate_workload(config.workload, seed)
    return load_workflow_json(config.workload)


@dataclass
class CellOutcome:
    seed: int
    scheduler: str
    policy: Policy
    metrics: Optional[dict] = None
    gantt: Optional[list] = None
    events: Optional[List[str]] = None
    error: Optional[str] = None


def _run_cell(config: ExperimentConfig, seed: int, scheduler: str, policy: Policy) -> CellOutcome:
    network, graphs = _workload_for(config, seed)
    out = CellOutcome(seed, scheduler, policy)
    try:
        result = run_simulation(graphs, network, policy, scheduler, rng_seed=seed, validate=config.validate)
    except SimulationError as exc:
        out.error = str(exc)
        return out
    out.metrics = compute_metrics(result).scalars()
    if config.emit_gantt:
        out.gantt = gantt_entries(result)
    if config.emit_events:
        out.events = [e.to_json() for e in result.events]
    return out


def _run_cell_args(args):
    return _run_cell(*args)


def _fmt(x) -> str:
    return repr(float(x))


def run_experiment(config: ExperimentConfig) -> int:
    """Run every (seed, scheduler, policy) cell and write results. Returns an exit status."""
    cells = [(config, seed, s, p) for seed in config.seeds for s in config.schedulers for p in config.policies]
    try:
        config.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_IO
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            outcomes = list(pool.map(_run_cell_args, cells, chunksize=max(1, len(cells) // (4 * config.workers))))
    else:
        outcomes = [_run_cell(*c) for c in cells]

    failed = [o for o in outcomes if o.error]
    for o in failed:
        log.error("invalid schedule in cell seed=%s scheduler=%s policy=%s: %s",
                  o.seed, o.scheduler, o.policy, o.error)

    rows = []
    for seed in config.seeds:
        group = [o for o in outcomes if o.seed == seed and not o.error]
        norms = {m: normalize([o.metrics[m] for o in group]) for m in METRIC_NAMES} if group else {}
        for i, o in enumerate(group):
            row = {"workload_seed": seed, "scheduler": o.scheduler, "policy": o.policy.label,
                   "k": o.policy.window if o.policy.window is not None else ""}
            row.update({m: _fmt(o.metrics[m]) for m in METRIC_NAMES})
            row.update({f"norm_{m}": _fmt(norms[m][i]) for m in METRIC_NAMES})
            rows.append(row)

    try:
        with open(config.out / "results.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        _write_summary(config, rows)
        for o in outcomes:
            stem = f"{o.seed}_{o.scheduler}_{o.policy.label}"
            if o.gantt is not None:
                (config.out / "gantt").mkdir(exist_ok=True)
                (config.out / "gantt" / f"{stem}.json").write_text(json.dumps(o.gantt, indent=1))
            if o.events is not None:
                (config.out / "events").mkdir(exist_ok=True)
                (config.out / "events" / f"{stem}.jsonl").write_text("\n".join(o.events) + "\n")
    except OSError as exc:
        log.error("failed writing results: %s", exc)
        return EXIT_IO
    return EXIT_SIMULATION if failed else EXIT_OK


def _write_summary(config: ExperimentConfig, rows: List[dict]) -> None:
    fields = ["scheduler", "policy", "k", "seeds"] + [f"median_{m}" for m in METRIC_NAMES] \
        + [f"median_norm_{m}" for m in METRIC_NAMES]
    with open(config.out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for s in config.schedulers:
            for p in config.policies:
                sel = [r for r in rows if r["scheduler"] == s and r["policy"] == p.label]
                if not sel:
                    continue
                out = {"scheduler": s, "policy": p.label, "k": p.window if p.window is not None else "",
                       "seeds": len(sel)}
                for m in METRIC_NAMES:
                    out[f"median_{m}"] = _fmt(statistics.median(float(r[m]) for r in sel))
                    out[f"median_norm_{m}"] = _fmt(statistics.median(float(r[f"norm_{m}"]) for r in sel))
                w.writerow(out)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynsched", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a workload as workflow JSON")
    gen.add_argument("--config", help="workload spec (TOML or JSON); defaults if omitted")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", required=True, help="output JSON file")

    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", help="seed list, e.g. 0,1,2 or 0-29 (overrides config)")
    run.add_argument("--out", help=f"output directory (default: config, then ${OUT_ENV}, then ./results)")
    run.add_argument("--workers", type=int)
    run.add_argument("--emit-gantt", action="store_true")
    run.add_argument("--emit-events", action="store_true")
    run.add_argument("--no-validate", action="store_true")

    for name, text in (("validate", "check a Gantt trace against a workload"),
                       ("metrics", "compute metrics from a Gantt trace and workload")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--workload", required=True, help="workflow JSON")
        p.add_argument("--gantt", required=True, help="Gantt JSON produced by `run --emit-gantt`")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except WorkloadError as exc:
        log.error("workload error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


def _dispatch(args) -> int:
    if args.command == "generate":
        spec = WorkloadSpec.from_dict(read_config_file(args.config)) if args.config else WorkloadSpec()
        network, graphs = generate_workload(spec, args.seed)
        save_workflow_json(args.out, network, graphs)
        return EXIT_OK

    if args.command == "run":
        path = Path(args.config)
        raw = read_config_file(path)
        if args.seed:
            raw["seeds"] = parse_seeds(args.seed)
        if args.out:
            raw["out"] = args.out
        if args.workers:
            raw["workers"] = args.workers
        if args.emit_gantt:
            raw["emit_gantt"] = True
        if args.emit_events:
            raw["emit_events"] = True
        if args.no_validate:
            raw["validate"] = False
        return run_experiment(ExperimentConfig.from_dict(raw, base_dir=path.parent))

    network, graphs = load_workflow_json(args.workload)
    schedule = load_gantt(args.gantt)
    if args.command == "validate":
        report = validate_schedule(schedule, graphs, network)
        for v in report.violations:
            print(v)
        print("ok" if report.ok else f"{len(report.violations)} violations")
        return EXIT_OK if report.ok else EXIT_INVALID

    result = SimulationResult(schedule, graphs, network, [], [])
    m = compute_metrics(result)
    print(json.dumps(m.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
