"""List-scheduling heuristics over a shared, pre-committed machine state.

Each scheduler takes the graph to place and a :class:`SchedulingContext`
holding the intervals already committed on every node, the finish times of
fixed predecessors, and the current clock. It returns assignments for exactly
the graph's tasks and never mutates the context.
"""

from __future__ import annotations

import bisect
import heapq
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .core import Assignment, Edge, Network, Schedule, TaskGraph, TaskId, topological_order, transfer_time


@dataclass
class NodeTimeline:
    """Committed ``(start, finish, task)`` intervals on one node, sorted by start."""

    node_id: str
    committed: List[Tuple[float, float, TaskId]] = field(default_factory=list)

    def find_slot(self, ready: float, duration: float) -> float:
        """Earliest start >= ``ready`` where ``duration`` fits (insertion policy)."""
        # Intervals do not overlap, so finishes are sorted too; skip everything
        # that ends at or before ``ready``.
        i = bisect.bisect_right(self.committed, ready, key=lambda iv: iv[1])
        start = ready
        for s, f, _ in self.committed[i:]:
            if start + duration <= s:
                return start
            if f > start:
                start = f
        return start

    def insert(self, start: float, finish: float, task: TaskId) -> None:
        bisect.insort(self.committed, (start, finish, task))

    def copy(self) -> "NodeTimeline":
        return NodeTimeline(self.node_id, list(self.committed))


@dataclass
class SchedulingContext:
    """Machine state a scheduler must respect.

    ``fixed_edges`` carries the data sizes of dependencies whose source is a
    fixed task (in ``fixed_finish``) and whose target is in the graph being
    scheduled.
    """

    network: Network
    timelines: Dict[str, NodeTimeline]
    fixed_finish: Dict[TaskId, Tuple[str, float]] = field(default_factory=dict)
    fixed_edges: Dict[Edge, float] = field(default_factory=dict)
    now: float = 0.0

    @classmethod
    def empty(cls, network: Network, now: float = 0.0) -> "SchedulingContext":
        return cls(network, {v: NodeTimeline(v) for v in network.nodes}, now=now)

    def fixed_inputs(self) -> Dict[TaskId, List[Tuple[TaskId, float]]]:
        out: Dict[TaskId, List[Tuple[TaskId, float]]] = {}
        for (src, dst), size in sorted(self.fixed_edges.items()):
            out.setdefault(dst, []).append((src, size))
        return out


Scheduler = Callable[[TaskGraph, SchedulingContext], Schedule]


class _Placer:
    """Working copy of the timelines plus the bookkeeping every heuristic shares."""

    def __init__(self, graph: TaskGraph, context: SchedulingContext):
        self.graph = graph
        self.ctx = context
        self.net = context.network
        self.nodes = context.network.nodes
        self.timelines = {v: context.timelines[v].copy() if v in context.timelines else NodeTimeline(v)
                          for v in self.nodes}
        self.fixed_in = context.fixed_inputs()
        self.placed: Schedule = {}

    def pred_ready(self, task: TaskId, node: str) -> Dict[TaskId, float]:
        ready = {}
        for p in self.graph.predecessors(task):
            a = self.placed[p]
            ready[p] = a.finish + transfer_time(self.graph.edges[(p, task)], a.node, node, self.net)
        for p, size in self.fixed_in.get(task, ()):
            pnode, pfinish = self.ctx.fixed_finish[p]
            ready[p] = pfinish + transfer_time(size, pnode, node, self.net)
        return ready

    def earliest(self, task: TaskId, node: str) -> Tuple[float, float]:
        return _earliest(task, node, self.graph, self.ctx.now, self.timelines[node],
                         self.net, self.pred_ready(task, node))

    def best_node(self, task: TaskId) -> Tuple[str, float, float]:
        best = None
        for v in self.nodes:
            start, finish = self.earliest(task, v)
            if best is None or finish < best[2]:
                best = (v, start, finish)
        return best

    def commit(self, task: TaskId, node: str, start: float, finish: float) -> None:
        self.timelines[node].insert(start, finish, task)
        self.placed[task] = Assignment(task, node, start, finish)

    def is_ready(self, task: TaskId) -> bool:
        return all(p in self.placed for p in self.graph.predecessors(task))


def _earliest(task, node, graph, now, timeline, network, pred_ready):
    ready = max(graph.release(task), now, *pred_ready.values()) if pred_ready else max(graph.release(task), now)
    duration = graph.tasks[task] / network.speed(node)
    start = timeline.find_slot(ready, duration)
    return start, start + duration


def earliest_start(task: TaskId, node: str, graph: TaskGraph, context: SchedulingContext,
                   pred_ready: Mapping[TaskId, float]) -> Tuple[float, float]:
    """Earliest ``(start, finish)`` for ``task`` on ``node``.

    ``pred_ready`` maps each predecessor to the time its data is available on
    ``node``. The start respects the task's release time, the clock, all
    predecessor data, and the node's committed intervals (idle gaps included).
    """
    timeline = context.timelines.get(node) or NodeTimeline(node)
    return _earliest(task, node, graph, context.now, timeline, context.network, dict(pred_ready))


def _mean_inverse_speed(network: Network) -> float:
    return float(np.mean([1.0 / s for s in network.speeds.values()]))


def _mean_inverse_strength(network: Network) -> float:
    # Ordered distinct pairs and unordered pairs give the same mean for a
    # symmetric network.
    if not network.links:
        return 0.0
    return float(np.mean([1.0 / s for s in network.links.values()]))


def upward_ranks(graph: TaskGraph, network: Network) -> Dict[TaskId, float]:
    """rank(t) = mean exec(t) + max over successors of (mean comm + rank(succ))."""
    inv_speed = _mean_inverse_speed(network)
    inv_link = _mean_inverse_strength(network)
    rank: Dict[TaskId, float] = {}
    for t in reversed(topological_order(graph)):
        tail = max((graph.edges[(t, s)] * inv_link + rank[s] for s in graph.successors(t)), default=0.0)
        rank[t] = graph.tasks[t] * inv_speed + tail
    return rank


def downward_ranks(graph: TaskGraph, network: Network) -> Dict[TaskId, float]:
    inv_speed = _mean_inverse_speed(network)
    inv_link = _mean_inverse_strength(network)
    rank: Dict[TaskId, float] = {}
    for t in topological_order(graph):
        rank[t] = max((rank[p] + graph.tasks[p] * inv_speed + graph.edges[(p, t)] * inv_link
                       for p in graph.predecessors(t)), default=0.0)
    return rank


def _priority_list_schedule(graph: TaskGraph, context: SchedulingContext,
                            priority: Dict[TaskId, float],
                            choose: Callable[[_Placer, TaskId], Tuple[str, float, float]]) -> Schedule:
    # Highest priority among ready tasks first. With consistent ranks this is
    # the plain descending-rank order; the ready check only guards float ties.
    placer = _Placer(graph, context)
    waiting = {t: len(graph.predecessors(t)) for t in graph.tasks}
    heap = [(-priority[t], t) for t, n in waiting.items() if n == 0]
    heapq.heapify(heap)
    while heap:
        _, t = heapq.heappop(heap)
        node, start, finish = choose(placer, t)
        placer.commit(t, node, start, finish)
        for s in graph.successors(t):
            waiting[s] -= 1
            if waiting[s] == 0:
                heapq.heappush(heap, (-priority[s], s))
    return placer.placed


def heft(graph: TaskGraph, context: SchedulingContext) -> Schedule:
    """Heterogeneous Earliest Finish Time with insertion."""
    rank = upward_ranks(graph, context.network)
    return _priority_list_schedule(graph, context, rank, lambda p, t: p.best_node(t))


def critical_path(graph: TaskGraph, priority: Mapping[TaskId, float]) -> List[TaskId]:
    """Chain of maximal-priority tasks starting from the best entry task."""
    entries = [t for t in graph.tasks if not graph.predecessors(t)]
    if not entries:
        return []
    t = min(entries, key=lambda x: (-priority[x], x))
    path = [t]
    while graph.successors(t):
        t = min(graph.successors(t), key=lambda x: (-priority[x], x))
        path.append(t)
    return path


def cpop(graph: TaskGraph, context: SchedulingContext) -> Schedule:
    """Critical Path On a Processor.

    Critical-path tasks all go to the node with the smallest summed execution
    time for the path; every other task goes to its earliest-finish node.
    """
    if not graph.tasks:
        return {}
    net = context.network
    up = upward_ranks(graph, net)
    down = downward_ranks(graph, net)
    priority = {t: up[t] + down[t] for t in graph.tasks}
    path = critical_path(graph, priority)
    on_path = set(path)
    work = sum(graph.tasks[t] for t in path)
    pinned = min(net.nodes, key=lambda v: (work / net.speed(v), net.nodes.index(v)))

    def choose(placer: _Placer, t: TaskId):
        if t in on_path:
            return (pinned, *placer.earliest(t, pinned))
        return placer.best_node(t)

    return _priority_list_schedule(graph, context, priority, choose)


def _ready_set_schedule(graph: TaskGraph, context: SchedulingContext, pick_largest: bool) -> Schedule:
    placer = _Placer(graph, context)
    ready = sorted(t for t in graph.tasks if not graph.predecessors(t))
    waiting = {t: len(graph.predecessors(t)) for t in graph.tasks}
    while ready:
        options = [(placer.best_node(t), t) for t in ready]
        if pick_largest:
            (node, start, finish), t = min(options, key=lambda o: (-o[0][2], o[1]))
        else:
            (node, start, finish), t = min(options, key=lambda o: (o[0][2], o[1]))
        placer.commit(t, node, start, finish)
        ready.remove(t)
        for s in graph.successors(t):
            waiting[s] -= 1
            if waiting[s] == 0:
                bisect.insort(ready, s)
    return placer.placed


def minmin(graph: TaskGraph, context: SchedulingContext) -> Schedule:
    """Commit the ready task whose best earliest finish is smallest, repeatedly."""
    return _ready_set_schedule(graph, context, pick_largest=False)


def maxmin(graph: TaskGraph, context: SchedulingContext) -> Schedule:
    """Commit the ready task whose best earliest finish is largest, repeatedly."""
    return _ready_set_schedule(graph, context, pick_largest=True)


def random_scheduler(graph: TaskGraph, context: SchedulingContext,
                     rng_seed: "int | np.random.Generator | None" = None) -> Schedule:
    """Topological order, uniformly random node, earliest start on that node.

    ``rng_seed`` may be a seed or a live Generator; a Generator is consumed
    in place so successive calls continue the same stream.
    """
    rng = np.random.default_rng(rng_seed)
    placer = _Placer(graph, context)
    nodes = placer.nodes
    for t in topological_order(graph):
        node = nodes[int(rng.integers(len(nodes)))]
        placer.commit(t, node, *placer.earliest(t, node))
    return placer.placed


SCHEDULER_NAMES = ("heft", "cpop", "minmin", "maxmin", "random")

_DETERMINISTIC = {"heft": heft, "cpop": cpop, "minmin": minmin, "maxmin": maxmin}


def get_scheduler(name: str, rng_seed: Optional[int] = None) -> Scheduler:
    """Look up a scheduler by name; ``random`` gets one Generator per call of this function."""
    key = name.lower()
    if key in _DETERMINISTIC:
        return _DETERMINISTIC[key]
    if key == "random":
        rng = np.random.default_rng(rng_seed)

        def _random(graph: TaskGraph, context: SchedulingContext) -> Schedule:
            return random_scheduler(graph, context, rng)

        _random.__name__ = "random"
        return _random
    raise KeyError(f"unknown scheduler {name!r}; choose from {', '.join(SCHEDULER_NAMES)}")
