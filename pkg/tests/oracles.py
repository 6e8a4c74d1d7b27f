"""Independent reference implementations used to check the library.

Nothing here imports the schedulers or the validator; only the plain data
types from ``dynsched.core``.
"""

import itertools
import math

from dynsched.core import TaskId

SLACK = 1e-9


def _flatten(graphs):
    cost, release, edges = {}, {}, {}
    for g in graphs:
        for t, c in g.tasks.items():
            cost[t] = c
            release[t] = g.release(t)
        edges.update(g.edges)
    return cost, release, edges


def _link(network, a, b):
    if a == b:
        return math.inf
    return network.links[frozenset((a, b))]


def is_feasible(schedule, graphs, network):
    """Pairwise check of the five validity conditions, returned as a bool."""
    cost, release, edges = _flatten(graphs)
    if set(schedule) != set(cost):
        return False
    for t, a in schedule.items():
        if a.node not in network.speeds:
            return False
        if a.start < 0 or a.finish < a.start:
            return False
        want = cost[t] / network.speeds[a.node]
        if abs((a.finish - a.start) - want) > SLACK * max(1.0, want):
            return False
        if a.start < release[t] - SLACK:
            return False
    items = list(schedule.values())
    for x, y in itertools.combinations(items, 2):
        if x.node != y.node:
            continue
        if not (x.finish <= y.start + SLACK or y.finish <= x.start + SLACK):
            return False
    for (u, v), size in edges.items():
        a, b = schedule[u], schedule[v]
        comm = 0.0 if a.node == b.node else size / _link(network, a.node, b.node)
        if b.start < a.finish + comm - SLACK:
            return False
    return True


def optimal_makespan(graphs, network):
    """Exact minimum makespan by enumeration.

    Every task order consistent with the dependencies is combined with every
    node assignment; tasks are then placed in that order, each at the earliest
    time its node is free, its data has arrived and it has been released.
    Some optimal schedule is reproduced this way (take its tasks in start
    order), so the minimum over the enumeration is the optimum.
    """
    cost, release, edges = _flatten(graphs)
    tasks = sorted(cost)
    preds = {t: [(u, d) for (u, v), d in edges.items() if v == t] for t in tasks}
    nodes = list(network.speeds)
    best = math.inf
    for order in itertools.permutations(tasks):
        pos = {t: i for i, t in enumerate(order)}
        if any(pos[u] > pos[v] for (u, v) in edges):
            continue
        for placement in itertools.product(nodes, repeat=len(tasks)):
            where = dict(zip(tasks, placement))
            free = {v: 0.0 for v in nodes}
            finish = {}
            for t in order:
                v = where[t]
                ready = release[t]
                for u, d in preds[t]:
                    comm = 0.0 if where[u] == v else d / _link(network, where[u], v)
                    ready = max(ready, finish[u] + comm)
                start = max(ready, free[v])
                finish[t] = start + cost[t] / network.speeds[v]
                free[v] = finish[t]
            best = min(best, max(finish.values(), default=0.0))
    return best


def enumerate_slots(committed, ready, duration):
    """All feasible starts on a small timeline, by trying every candidate point.

    Candidate starts are ``ready`` and every interval finish after it; the
    feasible ones do not overlap any committed interval.
    """
    candidates = {ready} | {f for _, f in committed if f >= ready}
    ok = []
    for s in sorted(candidates):
        if all(s + duration <= cs or cf <= s for cs, cf in committed):
            ok.append(s)
    return ok


def tid(g, i):
    return TaskId(g, i)
