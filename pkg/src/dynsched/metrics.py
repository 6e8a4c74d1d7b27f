"""Makespan, fairness, utilization and runtime metrics over a final schedule."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Sequence

from .core import Network, Schedule, TaskGraph
from .engine import SimulationResult

METRIC_NAMES = ("total_makespan", "mean_makespan", "mean_flowtime", "mean_utilization", "scheduler_runtime")


class MetricError(ValueError):
    pass


def _check(result: SimulationResult) -> None:
    if not result.schedule:
        raise MetricError("metric undefined for an empty schedule")


def total_makespan(result: SimulationResult) -> float:
    """Latest finish over all tasks."""
    _check(result)
    return max(a.finish for a in result.schedule.values())


def _graph_spans(result: SimulationResult):
    for g in result.graphs:
        if not g.tasks:
            continue
        assigned = [result.schedule[t] for t in g.tasks]
        yield g, min(a.start for a in assigned), max(a.finish for a in assigned)


def mean_makespan(result: SimulationResult) -> float:
    """Average over graphs of (last finish - arrival)."""
    _check(result)
    spans = [end - g.arrival_time for g, _, end in _graph_spans(result)]
    return sum(spans) / len(spans)


def mean_flowtime(result: SimulationResult) -> float:
    """Average over graphs of (last finish - first start)."""
    _check(result)
    spans = [end - start for _, start, end in _graph_spans(result)]
    return sum(spans) / len(spans)


def _work_by_node(schedule: Schedule, graphs: Sequence[TaskGraph], network: Network) -> Dict[str, float]:
    cost = {}
    for g in graphs:
        cost.update(g.tasks)
    busy = {v: 0.0 for v in network.nodes}
    for t, a in schedule.items():
        busy[a.node] += cost[t] / network.speed(a.node)
    return busy


def utilization(result: SimulationResult, network: Network = None) -> Dict[str, float]:
    """Busy time on each node divided by the total makespan."""
    network = network or result.network
    span = total_makespan(result)
    if span <= 0:
        raise MetricError("utilization undefined for zero makespan")
    return {v: b / span for v, b in _work_by_node(result.schedule, result.graphs, network).items()}


def scheduler_runtime(result: SimulationResult) -> float:
    return float(sum(result.runtimes))


@dataclass
class MetricVector:
    total_makespan: float
    mean_makespan: float
    mean_flowtime: float
    utilization: Dict[str, float]
    scheduler_runtime: float

    @property
    def mean_utilization(self) -> float:
        return sum(self.utilization.values()) / len(self.utilization)

    def scalars(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_utilization"] = self.mean_utilization
        return d


def compute_metrics(result: SimulationResult) -> MetricVector:
    return MetricVector(
        total_makespan=total_makespan(result),
        mean_makespan=mean_makespan(result),
        mean_flowtime=mean_flowtime(result),
        utilization=utilization(result),
        scheduler_runtime=scheduler_runtime(result),
    )


def normalize(values: "Sequence[float] | Mapping[str, float]"):
    """Divide by the smallest value so the best (lowest) entry becomes 1.0.

    Accepts a sequence (returns a list) or a mapping keyed by variant label
    (returns a dict with the same keys).
    """
    if isinstance(values, Mapping):
        keys = list(values)
        return dict(zip(keys, normalize([values[k] for k in keys])))
    vals: List[float] = [float(v) for v in values]
    if not vals:
        raise MetricError("nothing to normalize")
    if any(not v > 0 for v in vals):
        raise MetricError(f"normalization needs positive values, got {vals}")
    base = min(vals)
    return [v / base for v in vals]


def normalize_reports(reports: Mapping[str, MetricVector], metric: str) -> Dict[str, float]:
    """Normalize one metric across variants evaluated on the same workload instance."""
    if metric not in METRIC_NAMES:
        raise MetricError(f"unknown metric {metric!r}")
    return normalize({k: getattr(v, metric) for k, v in reports.items()})
