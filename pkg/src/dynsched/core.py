"""Task graphs, networks, schedules and the schedule validity checker.

Time, work and data are abstract units. A task ``t`` with cost ``c`` runs for
``c / s(v)`` on node ``v``; an edge carrying ``d`` data units between distinct
nodes ``v`` and ``w`` takes ``d / s(v, w)``. Local transfers are free.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

# Absolute slack used for every interval/precedence comparison on times.
TIME_EPS = 1e-9


class TaskId(NamedTuple):
    """Identity of a task: (arrival ordinal of its graph, ordinal within the graph)."""

    graph_index: int
    local_id: int

    def __str__(self) -> str:
        return f"{self.graph_index}:{self.local_id}"


Edge = Tuple[TaskId, TaskId]


class CycleError(ValueError):
    """Raised when dependencies contain a cycle. ``cycle`` lists one offending cycle."""

    def __init__(self, cycle: Sequence[TaskId]):
        self.cycle = list(cycle)
        super().__init__("dependency cycle: " + " -> ".join(str(t) for t in self.cycle))


class MergeError(ValueError):
    pass


class GraphError(ValueError):
    """A task graph or network violates a structural invariant."""


@dataclass(frozen=True)
class TaskGraph:
    """One arriving DAG.

    ``release_times`` is only populated for merged graphs, where tasks keep
    the arrival time of the graph they came from. For ordinary graphs every
    task is released at ``arrival_time``.
    """

    tasks: Dict[TaskId, float]
    edges: Dict[Edge, float] = field(default_factory=dict)
    arrival_time: float = 0.0
    release_times: Optional[Dict[TaskId, float]] = None

    def __post_init__(self):
        if self.arrival_time < 0:
            raise GraphError(f"negative arrival time {self.arrival_time}")
        for t, cost in self.tasks.items():
            if not cost > 0:
                raise GraphError(f"task {t} has nonpositive cost {cost}")
        for (src, dst), size in self.edges.items():
            if src not in self.tasks or dst not in self.tasks:
                raise GraphError(f"edge {src}->{dst} has an endpoint outside the graph")
            if not size > 0:
                raise GraphError(f"edge {src}->{dst} has nonpositive data size {size}")
        if self.release_times is not None and set(self.release_times) != set(self.tasks):
            raise GraphError("release_times must cover exactly the graph's tasks")
        succ: Dict[TaskId, List[TaskId]] = {t: [] for t in self.tasks}
        pred: Dict[TaskId, List[TaskId]] = {t: [] for t in self.tasks}
        for src, dst in sorted(self.edges):
            succ[src].append(dst)
            pred[dst].append(src)
        object.__setattr__(self, "_succ", succ)
        object.__setattr__(self, "_pred", pred)

    def __len__(self) -> int:
        return len(self.tasks)

    def __contains__(self, task: TaskId) -> bool:
        return task in self.tasks

    def successors(self, task: TaskId) -> List[TaskId]:
        return self._succ[task]

    def predecessors(self, task: TaskId) -> List[TaskId]:
        return self._pred[task]

    def release(self, task: TaskId) -> float:
        if self.release_times is not None:
            return self.release_times[task]
        if task not in self.tasks:
            raise KeyError(task)
        return self.arrival_time


@dataclass(frozen=True)
class Network:
    """Complete network of compute nodes.

    ``speeds`` keeps node order, which is the tie-break order for node choice.
    ``links`` maps unordered node pairs (frozensets) to link strength.
    """

    speeds: Dict[str, float]
    links: Dict[frozenset, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.speeds:
            raise GraphError("network has no nodes")
        for v, s in self.speeds.items():
            if not s > 0:
                raise GraphError(f"node {v} has nonpositive speed {s}")
        nodes = list(self.speeds)
        for i, a in enumerate(nodes):
            for b in nodes[i + 1:]:
                key = frozenset((a, b))
                if key not in self.links:
                    raise GraphError(f"missing link between {a} and {b}")
                if not self.links[key] > 0:
                    raise GraphError(f"link {a}-{b} has nonpositive strength")
        for key in self.links:
            if len(key) != 2 or not key <= set(nodes):
                raise GraphError(f"link {sorted(key)} does not join two known nodes")

    @classmethod
    def from_pairs(cls, speeds: Mapping[str, float], links: Mapping[Tuple[str, str], float]) -> "Network":
        return cls(dict(speeds), {frozenset(k): float(v) for k, v in links.items()})

    @property
    def nodes(self) -> List[str]:
        return list(self.speeds)

    def speed(self, node: str) -> float:
        return self.speeds[node]

    def strength(self, a: str, b: str) -> float:
        if a == b:
            if a not in self.speeds:
                raise KeyError(a)
            return math.inf
        return self.links[frozenset((a, b))]


@dataclass(frozen=True)
class Assignment:
    task: TaskId
    node: str
    start: float
    finish: float

    def __post_init__(self):
        if self.start > self.finish:
            raise ValueError(f"assignment of {self.task} finishes before it starts")


# A schedule is a plain mapping; one assignment per task.
Schedule = Dict[TaskId, Assignment]


def _find_task(task: TaskId, graphs: Iterable[TaskGraph]) -> TaskGraph:
    for g in graphs:
        if task in g.tasks:
            return g
    raise KeyError(f"unknown task {task}")


def _find_edge(edge: Edge, graphs: Iterable[TaskGraph]) -> float:
    for g in graphs:
        if edge in g.edges:
            return g.edges[edge]
    raise KeyError(f"unknown dependency {edge[0]} -> {edge[1]}")


def exec_time(task: TaskId, node: str, graphs: Sequence[TaskGraph], network: Network) -> float:
    """Execution time c(t)/s(v) of ``task`` on ``node``."""
    return _find_task(task, graphs).tasks[task] / network.speed(node)


def comm_time(edge: Edge, src_node: str, dst_node: str,
              graphs: Sequence[TaskGraph], network: Network) -> float:
    """Transfer time of an edge's data between two nodes; zero when co-located."""
    size = _find_edge(edge, graphs)
    return transfer_time(size, src_node, dst_node, network)


def transfer_time(size: float, src_node: str, dst_node: str, network: Network) -> float:
    if src_node == dst_node:
        network.speed(src_node)
        return 0.0
    return size / network.strength(src_node, dst_node)


@dataclass(frozen=True)
class Violation:
    constraint: int
    tasks: Tuple[TaskId, ...]
    message: str

    def __str__(self) -> str:
        return f"[{self.constraint}] {self.message}"


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def constraints(self) -> set:
        return {v.constraint for v in self.violations}


def validate_schedule(schedule: Mapping[TaskId, Assignment], graphs: Sequence[TaskGraph],
                      network: Network) -> ValidationReport:
    """Check a schedule against the five validity conditions.

    Constraint numbers in the report: 1 coverage (and ``0 <= start <= finish``,
    known node), 2 duration, 3 per-node overlap, 4 arrival, 5 precedence plus
    communication. All violations are collected; nothing is raised.
    """
    out: List[Violation] = []
    owner: Dict[TaskId, TaskGraph] = {}
    for g in graphs:
        for t in g.tasks:
            owner[t] = g

    for t in owner:
        if t not in schedule:
            out.append(Violation(1, (t,), f"task {t} is not scheduled"))
    placed: Dict[TaskId, Assignment] = {}
    for t, a in schedule.items():
        if t not in owner:
            out.append(Violation(1, (t,), f"assignment for unknown task {t}"))
            continue
        if a.node not in network.speeds:
            out.append(Violation(1, (t,), f"task {t} assigned to unknown node {a.node!r}"))
            continue
        if not (0 <= a.start <= a.finish):
            out.append(Violation(1, (t,), f"task {t} has invalid interval [{a.start}, {a.finish}]"))
        placed[t] = a

    for t, a in placed.items():
        expected = owner[t].tasks[t] / network.speed(a.node)
        if not math.isclose(a.finish - a.start, expected, rel_tol=1e-9, abs_tol=TIME_EPS):
            out.append(Violation(2, (t,), f"task {t} runs {a.finish - a.start} instead of {expected}"))

    by_node: Dict[str, List[Assignment]] = {}
    for a in placed.values():
        by_node.setdefault(a.node, []).append(a)
    for node, items in by_node.items():
        items.sort(key=lambda a: (a.start, a.finish, a.task))
        # Sweep keeping the interval that reaches furthest right; any later
        # start before that finish overlaps it.
        reach = None
        for a in items:
            if reach is not None and reach.finish > a.start + TIME_EPS:
                out.append(Violation(3, (reach.task, a.task),
                                     f"tasks {reach.task} and {a.task} overlap on node {node}"))
            if reach is None or a.finish > reach.finish:
                reach = a

    for t, a in placed.items():
        release = owner[t].release(t)
        if a.start < release - TIME_EPS:
            out.append(Violation(4, (t,), f"task {t} starts at {a.start} before its arrival {release}"))

    for g in graphs:
        for (src, dst), size in g.edges.items():
            if src not in placed or dst not in placed:
                continue
            a, b = placed[src], placed[dst]
            ready = a.finish + transfer_time(size, a.node, b.node, network)
            if b.start < ready - TIME_EPS:
                out.append(Violation(5, (src, dst),
                                     f"task {dst} starts at {b.start} before data from {src} is ready at {ready}"))
    return ValidationReport(out)


def topological_order(graph: TaskGraph) -> List[TaskId]:
    """Kahn's algorithm with ties broken by TaskId ascending."""
    indeg = {t: len(graph.predecessors(t)) for t in graph.tasks}
    heap = [t for t, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        t = heapq.heappop(heap)
        order.append(t)
        for s in graph.successors(t):
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, s)
    if len(order) != len(graph.tasks):
        raise CycleError(_find_cycle(graph, {t for t, d in indeg.items() if d > 0}))
    return order


def _find_cycle(graph: TaskGraph, remaining: set) -> List[TaskId]:
    # Every task left after Kahn's pass has a predecessor that is also left,
    # so walking predecessors must revisit a task.
    t = min(remaining)
    seen: Dict[TaskId, int] = {}
    path: List[TaskId] = []
    while t not in seen:
        seen[t] = len(path)
        path.append(t)
        t = min(p for p in graph.predecessors(t) if p in remaining)
    cycle = path[seen[t]:]
    cycle.reverse()
    return cycle + [cycle[0]]


def check_acyclic(graph: TaskGraph) -> None:
    topological_order(graph)


def merge_graphs(graphs: Sequence[TaskGraph]) -> TaskGraph:
    """Disjoint union of graph fragments, keeping each task's release time."""
    if not graphs:
        return TaskGraph({}, {}, 0.0, {})
    if len(graphs) == 1:
        return graphs[0]
    tasks: Dict[TaskId, float] = {}
    edges: Dict[Edge, float] = {}
    release: Dict[TaskId, float] = {}
    for g in graphs:
        for t, c in g.tasks.items():
            if t in tasks:
                raise MergeError(f"duplicate task {t} across merged graphs")
            tasks[t] = c
            release[t] = g.release(t)
        edges.update(g.edges)
    arrival = min(g.arrival_time for g in graphs)
    return TaskGraph(tasks, edges, arrival, release)


def components(graph: TaskGraph) -> List[List[TaskId]]:
    """Weakly connected components, each sorted, ordered by smallest task."""
    parent = {t: t for t in graph.tasks}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for src, dst in graph.edges:
        ra, rb = find(src), find(dst)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: Dict[TaskId, List[TaskId]] = {}
    for t in sorted(graph.tasks):
        groups.setdefault(find(t), []).append(t)
    return sorted(groups.values())


def schedule_makespan(schedule: Mapping[TaskId, Assignment]) -> float:
    return max((a.finish for a in schedule.values()), default=0.0)
