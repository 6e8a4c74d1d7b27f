import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import desk_spec, graph, network
from dynsched.core import Assignment, Network, TaskId
from dynsched.engine import Policy, SimulationResult, run_simulation
from dynsched.metrics import (
    MetricError,
    compute_metrics,
    mean_flowtime,
    mean_makespan,
    normalize,
    normalize_reports,
    scheduler_runtime,
    total_makespan,
    utilization,
)
from dynsched.workloads import generate_workload

T = TaskId


def result(graphs, placements, net=None, runtimes=()):
    """``placements`` maps TaskId -> (node, start, finish)."""
    net = net or Network({"a": 1.0})
    sched = {t: Assignment(t, *p) for t, p in placements.items()}
    return SimulationResult(sched, list(graphs), net, list(runtimes), [])


class TestTotalMakespan:
    def test_single(self):
        assert total_makespan(result([graph([3])], {T(0, 0): ("a", 0, 3)})) == 3

    def test_two_graphs(self):
        gs = [graph([5]), graph([4], arrival=5, index=1)]
        assert total_makespan(result(gs, {T(0, 0): ("a", 0, 5), T(1, 0): ("a", 5, 9)})) == 9

    def test_empty(self):
        with pytest.raises(MetricError):
            total_makespan(result([], {}))


class TestMeanMakespan:
    def test_single(self):
        assert mean_makespan(result([graph([7])], {T(0, 0): ("a", 0, 7)})) == 7

    def test_two_graphs(self):
        gs = [graph([4]), graph([6], arrival=2, index=1)]
        r = result(gs, {T(0, 0): ("a", 0, 4), T(1, 0): ("a", 2, 8)}, Network.from_pairs({"a": 1, "b": 1}, {("a", "b"): 1}))
        assert mean_makespan(r) == 5

    def test_equals_total_for_one_graph_at_zero(self):
        r = result([graph([2, 3], [(0, 1, 1)])], {T(0, 0): ("a", 0, 2), T(0, 1): ("a", 2, 5)})
        assert mean_makespan(r) == total_makespan(r)


class TestMeanFlowtime:
    def test_single(self):
        r = result([graph([2, 3], [(0, 1, 1)])], {T(0, 0): ("a", 1, 3), T(0, 1): ("a", 3, 6)})
        assert mean_flowtime(r) == 5

    def test_single_task_graphs(self):
        gs = [graph([2]), graph([5], index=1)]
        assert mean_flowtime(result(gs, {T(0, 0): ("a", 0, 2), T(1, 0): ("a", 2, 7)})) == 3.5

    def test_independent_of_arrival(self):
        pl = {T(0, 0): ("a", 4, 6), T(1, 0): ("a", 6, 9)}
        early = result([graph([2]), graph([3], index=1)], pl)
        late = result([graph([2], arrival=3), graph([3], arrival=4, index=1)], pl)
        assert mean_flowtime(early) == mean_flowtime(late)


class TestUtilization:
    def test_back_to_back(self):
        r = result([graph([2, 3])], {T(0, 0): ("a", 0, 2), T(0, 1): ("a", 2, 5)})
        assert utilization(r) == {"a": 1.0}

    def test_idle_node_and_half(self):
        net = Network.from_pairs({"a": 1, "b": 1}, {("a", "b"): 1})
        gs = [graph([2]), graph([1], arrival=3, index=1)]
        r = result(gs, {T(0, 0): ("a", 0, 2), T(1, 0): ("a", 3, 4)}, net)
        u = utilization(r)
        assert u == {"a": 0.75, "b": 0.0}
        r = result([graph([2]), graph([4], index=1)], {T(0, 0): ("a", 0, 2), T(1, 0): ("b", 0, 4)}, net)
        assert utilization(r)["a"] == 0.5

    def test_zero_makespan(self):
        with pytest.raises(MetricError):
            utilization(result([], {}))


class TestRuntime:
    def test_sums(self):
        assert scheduler_runtime(result([], {}, runtimes=[])) == 0
        assert scheduler_runtime(result([], {}, runtimes=[0.1, 0.2])) == pytest.approx(0.3)


class TestNormalize:
    def test_definition(self):
        assert normalize([4, 8]) == [1.0, 2.0]
        assert normalize([3.3]) == [1.0]
        assert normalize({"P": 2.0, "NP": 3.0}) == {"P": 1.0, "NP": 1.5}

    def test_nonpositive(self):
        with pytest.raises(MetricError):
            normalize([0.0, 1.0])
        with pytest.raises(MetricError):
            normalize([])

    @given(st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=8), st.floats(1e-3, 1e3))
    def test_argmin_and_scale_invariance(self, vals, lam):
        out = normalize(vals)
        assert int(np.argmin(out)) == int(np.argmin(vals))
        assert min(out) == 1.0
        assert normalize([v * lam for v in vals]) == pytest.approx(out, rel=1e-12)

    def test_reports(self):
        gs = [graph([2, 2])]
        net = network([1, 1])
        reps = {p: compute_metrics(run_simulation(gs, net, Policy.parse(p), s))
                for p, s in (("P", "heft"), ("NP", "random"))}
        norm = normalize_reports(reps, "total_makespan")
        assert min(norm.values()) == 1.0
        with pytest.raises(MetricError):
            normalize_reports(reps, "nope")


@pytest.mark.parametrize("seed", range(25))
def test_metric_relations_on_runs(seed):
    rng = np.random.default_rng(100 + seed)
    net, gs = generate_workload(desk_spec(rng))
    pol = [Policy.preemptive(), Policy.non_preemptive(), Policy.last_k(2)][seed % 3]
    res = run_simulation(gs, net, pol, ["heft", "cpop", "minmin", "maxmin", "random"][seed % 5], rng_seed=seed)
    m = compute_metrics(res)
    assert m.mean_flowtime <= m.mean_makespan + 1e-9
    assert m.total_makespan >= m.mean_makespan - 1e-9
    assert all(0.0 <= u <= 1 + 1e-9 for u in m.utilization.values())
    work = sum(c for g in gs for c in g.tasks.values())
    recovered = sum(m.utilization[v] * net.speed(v) * m.total_makespan for v in net.nodes)
    assert recovered == pytest.approx(work, rel=1e-6)
    assert m.scheduler_runtime >= 0
