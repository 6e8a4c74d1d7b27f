"""Dynamic simulation loop: graph arrivals, preemption policies, rescheduling.

On every arrival the clock advances, tasks that have started become immutable,
the policy decides which not-yet-started tasks are reverted, and the chosen
static scheduler places the arriving graph together with the reverted tasks
around everything that stays fixed.

Last-K window semantics: the window counts *prior* graphs. ``LastK(w)``
reverts Scheduled tasks belonging to the ``w`` most recent graphs that
arrived before the current one; the arriving graph is always scheduled on
top of that. ``LastK(0)`` is therefore non-preemptive and any window at least
as large as the number of prior graphs is fully preemptive.
"""

from __future__ import annotations

import enum
import json
import re
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .core import (
    TIME_EPS,
    Assignment,
    Network,
    Schedule,
    TaskGraph,
    TaskId,
    merge_graphs,
    validate_schedule,
)
from .schedulers import NodeTimeline, Scheduler, SchedulingContext, get_scheduler


class TaskState(enum.Enum):
    UNSCHEDULED = "unscheduled"
    SCHEDULED = "scheduled"
    EXECUTING = "executing"
    FINISHED = "finished"


class SimulationError(RuntimeError):
    pass


class SchedulerFailure(SimulationError):
    def __init__(self, arrival_index: int, cause: BaseException):
        self.arrival_index = arrival_index
        super().__init__(f"scheduler failed on arrival {arrival_index}: {cause}")


class InternalConsistencyError(SimulationError):
    """The final schedule violates a validity constraint. Always a bug."""

    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:5])
        super().__init__(f"final schedule invalid ({len(self.violations)} violations): {head}")


class PolicyKind(enum.Enum):
    PREEMPTIVE = "P"
    NON_PREEMPTIVE = "NP"
    LAST_K = "KP"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    window: Optional[int] = None

    @classmethod
    def preemptive(cls) -> "Policy":
        return cls(PolicyKind.PREEMPTIVE)

    @classmethod
    def non_preemptive(cls) -> "Policy":
        return cls(PolicyKind.NON_PREEMPTIVE)

    @classmethod
    def last_k(cls, window: int) -> "Policy":
        if window < 0:
            raise ValueError("preemption window must be nonnegative")
        if window == 0:
            return cls.non_preemptive()
        return cls(PolicyKind.LAST_K, int(window))

    @classmethod
    def parse(cls, text: str) -> "Policy":
        """Parse ``P``, ``NP`` or ``<K>P`` (for example ``5P``)."""
        s = text.strip().upper()
        if s == "P":
            return cls.preemptive()
        if s == "NP":
            return cls.non_preemptive()
        m = re.fullmatch(r"(\d+)P", s)
        if m:
            return cls.last_k(int(m.group(1)))
        raise ValueError(f"unrecognized policy {text!r}")

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.LAST_K:
            return f"{self.window}P"
        return self.kind.value

    def __str__(self) -> str:
        return self.label


FullyPreemptive = Policy.preemptive
NonPreemptive = Policy.non_preemptive
LastK = Policy.last_k


@dataclass(frozen=True)
class Event:
    t: float
    event: str
    task: TaskId
    node: Optional[str] = None
    start: Optional[float] = None
    finish: Optional[float] = None

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "event": self.event, "task": str(self.task),
                           "node": self.node, "start": self.start, "finish": self.finish})


@dataclass
class SimulationState:
    clock: float = 0.0
    states: Dict[TaskId, TaskState] = field(default_factory=dict)
    assignments: Dict[TaskId, Assignment] = field(default_factory=dict)
    arrived_graphs: List[TaskGraph] = field(default_factory=list)
    events: List[Event] = field(default_factory=list)

    def copy(self) -> "SimulationState":
        return SimulationState(self.clock, dict(self.states), dict(self.assignments),
                               list(self.arrived_graphs), list(self.events))


@dataclass
class SimulationResult:
    schedule: Schedule
    graphs: List[TaskGraph]
    network: Network
    runtimes: List[float]
    events: List[Event]
    # Tasks handed to the scheduler on each arrival (new + reverted).
    batch_sizes: List[int] = field(default_factory=list)


def advance_to(state: SimulationState, t: float) -> SimulationState:
    """Move the clock forward, promoting Scheduled -> Executing -> Finished."""
    if t < state.clock:
        raise SimulationError(f"cannot move clock back from {state.clock} to {t}")
    new = state.copy()
    new.clock = t
    for task, st in state.states.items():
        if st is TaskState.SCHEDULED or st is TaskState.EXECUTING:
            a = state.assignments[task]
            if a.finish <= t:
                new.states[task] = TaskState.FINISHED
            elif a.start <= t:
                new.states[task] = TaskState.EXECUTING
    return new


def reschedulable_set(state: SimulationState, policy: Policy, new_graph_index: int) -> Set[TaskId]:
    pending = {t for t, st in state.states.items()
               if st is TaskState.SCHEDULED and state.assignments[t].start > state.clock}
    if policy.kind is PolicyKind.PREEMPTIVE:
        return pending
    if policy.kind is PolicyKind.NON_PREEMPTIVE:
        return set()
    window = set(range(max(0, new_graph_index - policy.window), new_graph_index))
    return {t for t in pending if t.graph_index in window}


def _fragment(graph: TaskGraph, keep: Set[TaskId]) -> TaskGraph:
    tasks = {t: c for t, c in graph.tasks.items() if t in keep}
    edges = {e: d for e, d in graph.edges.items() if e[0] in keep and e[1] in keep}
    return TaskGraph(tasks, edges, graph.arrival_time)


def handle_arrival(state: SimulationState, graph: TaskGraph, policy: Policy,
                   scheduler: Scheduler, network: Network) -> Tuple[SimulationState, float, int]:
    """Process one arrival. Returns the new state, the scheduler wall-clock
    duration in seconds, and the number of tasks handed to the scheduler."""
    if graph.arrival_time < state.clock:
        raise SimulationError(f"arrival at {graph.arrival_time} precedes clock {state.clock}")
    index = len(state.arrived_graphs)
    s = advance_to(state, graph.arrival_time)
    now = s.clock
    s.arrived_graphs.append(graph)
    s.events.extend(Event(now, "arrival", t) for t in sorted(graph.tasks))

    reverted = reschedulable_set(s, policy, index)
    for t in sorted(reverted):
        s.states[t] = TaskState.UNSCHEDULED
        del s.assignments[t]
        s.events.append(Event(now, "revert", t))

    by_graph: Dict[int, Set[TaskId]] = {}
    for t in reverted:
        by_graph.setdefault(t.graph_index, set()).add(t)
    parts = [_fragment(s.arrived_graphs[i], ts) for i, ts in sorted(by_graph.items())]
    merged = merge_graphs(parts + [graph])

    timelines = {v: NodeTimeline(v) for v in network.nodes}
    for a in s.assignments.values():
        # Intervals that end by now cannot collide with anything starting at or after now.
        if a.finish > now:
            timelines[a.node].committed.append((a.start, a.finish, a.task))
    for tl in timelines.values():
        tl.committed.sort()

    fixed_finish = {}
    fixed_edges = {}
    for i in by_graph:
        g = s.arrived_graphs[i]
        for (src, dst), size in g.edges.items():
            if dst in reverted and src not in reverted:
                a = s.assignments[src]
                fixed_finish[src] = (a.node, a.finish)
                fixed_edges[(src, dst)] = size
    context = SchedulingContext(network, timelines, fixed_finish, fixed_edges, now)

    t0 = time.perf_counter()
    try:
        fragment = scheduler(merged, context)
    except Exception as exc:  # noqa: BLE001 - re-raised with the arrival index
        raise SchedulerFailure(index, exc) from exc
    elapsed = time.perf_counter() - t0

    if set(fragment) != set(merged.tasks):
        raise SchedulerFailure(index, ValueError("scheduler did not return exactly the submitted tasks"))
    for t in sorted(fragment):
        a = fragment[t]
        if a.start < now - TIME_EPS:
            raise SchedulerFailure(index, ValueError(f"task {t} placed in the past"))
        s.assignments[t] = a
        s.states[t] = TaskState.SCHEDULED
        s.events.append(Event(now, "place", t, a.node, a.start, a.finish))
    return s, elapsed, len(merged)


def run_simulation(graphs: Sequence[TaskGraph], network: Network, policy: Policy,
                   scheduler: "Scheduler | str", rng_seed: Optional[int] = None,
                   validate: bool = True) -> SimulationResult:
    """Feed arrivals in order through :func:`handle_arrival` and run to completion.

    ``graphs[i]`` must hold tasks with ``graph_index == i`` and arrivals must be
    nondecreasing. ``rng_seed`` only matters for the random scheduler.
    """
    if isinstance(scheduler, str):
        scheduler = get_scheduler(scheduler, rng_seed)
    for i, g in enumerate(graphs):
        if any(t.graph_index != i for t in g.tasks):
            raise ValueError(f"graph {i} contains tasks with a different graph_index")
        if i and g.arrival_time < graphs[i - 1].arrival_time:
            raise ValueError("graphs must be ordered by arrival time")

    state = SimulationState()
    runtimes: List[float] = []
    sizes: List[int] = []
    for g in graphs:
        state, elapsed, n = handle_arrival(state, g, policy, scheduler, network)
        runtimes.append(elapsed)
        sizes.append(n)
    end = max((a.finish for a in state.assignments.values()), default=state.clock)
    state = advance_to(state, max(end, state.clock))

    schedule = dict(state.assignments)
    if validate:
        report = validate_schedule(schedule, graphs, network)
        if not report.ok:
            raise InternalConsistencyError(report.violations)
    return SimulationResult(schedule, list(graphs), network, runtimes, state.events, sizes)


def replay_events(events: Sequence[Event]) -> Schedule:
    """Rebuild the final schedule from an event log."""
    schedule: Schedule = {}
    for e in events:
        if e.event == "place":
            schedule[e.task] = Assignment(e.task, e.node, e.start, e.finish)
        elif e.event == "revert":
            del schedule[e.task]
    return schedule
