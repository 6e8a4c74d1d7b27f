"""Dynamic task-graph scheduling with preemptive, non-preemptive and Last-K policies."""

from .core import (
    Assignment,
    CycleError,
    MergeError,
    Network,
    TaskGraph,
    TaskId,
    ValidationReport,
    Violation,
    comm_time,
    exec_time,
    merge_graphs,
    topological_order,
    validate_schedule,
)
from .engine import LastK, Policy, SimulationResult, TaskState, run_simulation
from .metrics import MetricVector, compute_metrics, normalize
from .schedulers import SchedulingContext, cpop, get_scheduler, heft, maxmin, minmin, random_scheduler
from .workloads import WorkloadSpec, generate_workload, load_workflow_json, save_workflow_json

__version__ = "0.1.0"
