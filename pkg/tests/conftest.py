import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dynsched.core import Network, TaskGraph, TaskId  # noqa: E402
from dynsched.workloads import TruncatedGaussianMixture, WorkloadSpec  # noqa: E402


def graph(costs, edges=(), arrival=0.0, index=0):
    """Build graph ``index`` from a cost list and ``(u, v, size)`` local-id triples."""
    tasks = {TaskId(index, i): float(c) for i, c in enumerate(costs)}
    return TaskGraph(tasks, {(TaskId(index, u), TaskId(index, v)): float(d) for u, v, d in edges}, arrival)


def network(speeds, strength=1.0):
    ids = [f"n{i}" for i in range(len(speeds))]
    links = {}
    for i, a in enumerate(ids):
        for j, b in enumerate(ids[i + 1:], i + 1):
            links[(a, b)] = strength[(i, j)] if isinstance(strength, dict) else strength
    return Network.from_pairs(dict(zip(ids, speeds)), links)


def desk_spec(rng: np.random.Generator, kind=None) -> WorkloadSpec:
    """Random small workload: <= 20 graphs, <= 30 tasks per graph, <= 8 nodes."""
    kind = kind or ("adversarial" if rng.random() < 0.25 else "synthetic")
    return WorkloadSpec(
        kind=kind,
        graph_count=int(rng.integers(1, 21)),
        node_count=int(rng.integers(1, 9)),
        tree_levels=(2, 3),
        tree_branching=(2, 4),
        fork_width=(1, 5),
        fork_stages=(1, 3),
        chain_length=(1, 12),
        arrival_process=str(rng.choice(["poisson", "fixed_interval"])),
        arrival_param=float(rng.choice([0.05, 0.2, 1.0, 5.0, 20.0])),
        adversarial_successors=int(rng.integers(1, 29)),
        adversarial_root_cost=float(rng.uniform(10, 100)),
        link_strengths=TruncatedGaussianMixture.single(1.0, 0.5, 0.05, 3.0),
        seed=int(rng.integers(2**31)),
    )


@pytest.fixture
def two_nodes():
    return network([1.0, 2.0], strength=100.0)


# Acceptance criteria report lines, printed at the end of the session.
ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    def _record(criterion, passed, detail):
        ACCEPTANCE_LINES.append((criterion, f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
