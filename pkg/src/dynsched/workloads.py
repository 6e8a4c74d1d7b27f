"""Workload generation and workflow JSON I/O.

Synthetic workloads mix four topologies (out-tree, in-tree, fork-join, chain)
with task and edge weights drawn from truncated Gaussian mixtures. The
adversarial workload is a stream of depth-one out-trees, each a heavy root
followed by many light successors.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .core import GraphError, Network, TaskGraph, TaskId, check_acyclic

TOPOLOGIES = ("out_tree", "in_tree", "fork_join", "chain")

MAX_REJECTIONS = 10**6


class WorkloadError(ValueError):
    pass


class SamplingStarvationError(WorkloadError):
    pass


class WorkflowParseError(WorkloadError):
    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


class WorkflowValidationError(WorkloadError):
    pass


@dataclass(frozen=True)
class TruncatedGaussianMixture:
    """Mixture of Gaussians ``(weight, mean, stddev)`` truncated to ``[lower, upper]``."""

    components: Tuple[Tuple[float, float, float], ...]
    lower: float
    upper: float

    def __post_init__(self):
        comps = tuple(tuple(float(x) for x in c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise WorkloadError("mixture needs at least one component")
        weights = [w for w, _, _ in comps]
        if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
            raise WorkloadError(f"mixture weights must be nonnegative and sum to 1, got {weights}")
        if any(sd < 0 for _, _, sd in comps):
            raise WorkloadError("mixture stddevs must be nonnegative")
        if not 0 < self.lower < self.upper:
            raise WorkloadError(f"need 0 < lower < upper, got [{self.lower}, {self.upper}]")

    @functools.cached_property
    def _arrays(self):
        c = np.array(self.components)
        return np.cumsum(c[:, 0]), c[:, 1], c[:, 2]

    @classmethod
    def single(cls, mean: float, stddev: float, lower: float, upper: float) -> "TruncatedGaussianMixture":
        return cls(((1.0, mean, stddev),), lower, upper)

    def to_dict(self) -> dict:
        return {"components": [list(c) for c in self.components], "lower": self.lower, "upper": self.upper}

    @classmethod
    def from_dict(cls, d: dict) -> "TruncatedGaussianMixture":
        return cls(tuple(tuple(c) for c in d["components"]), float(d["lower"]), float(d["upper"]))


def sample_mixture(mixture: TruncatedGaussianMixture, rng: np.random.Generator) -> float:
    """One draw by rejection: pick a component, sample it, retry outside the bounds."""
    cum, means, sds = mixture._arrays
    tried = 0
    batch = 8
    while tried < MAX_REJECTIONS:
        n = min(batch, MAX_REJECTIONS - tried)
        k = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(cum) - 1)
        x = rng.normal(means[k], sds[k])
        ok = np.flatnonzero((x >= mixture.lower) & (x <= mixture.upper))
        if ok.size:
            return float(x[ok[0]])
        tried += n
        batch = min(batch * 8, 1 << 16)
    raise SamplingStarvationError(
        f"no sample inside [{mixture.lower}, {mixture.upper}] after {MAX_REJECTIONS} draws")


# Shipped defaults. The weight mixtures have five components spread over
# roughly one order of magnitude.
DEFAULT_TASK_WEIGHTS = TruncatedGaussianMixture(
    ((0.2, 2.0, 0.5), (0.2, 5.0, 1.0), (0.2, 10.0, 2.0), (0.2, 15.0, 3.0), (0.2, 25.0, 5.0)), 0.5, 40.0)
DEFAULT_EDGE_WEIGHTS = TruncatedGaussianMixture(
    ((0.2, 1.0, 0.3), (0.2, 2.5, 0.5), (0.2, 5.0, 1.0), (0.2, 8.0, 2.0), (0.2, 12.0, 3.0)), 0.1, 20.0)
DEFAULT_SPEEDS = TruncatedGaussianMixture.single(1.0, 0.3, 0.2, 2.0)
DEFAULT_STRENGTHS = TruncatedGaussianMixture.single(1.0, 0.3, 0.2, 2.0)


def gen_topology(kind: str, *, levels: int = 3, branching: int = 2, width: int = 3,
                 stages: int = 1, length: int = 4) -> Tuple[int, List[Tuple[int, int]]]:
    """Unweighted DAG skeleton as ``(task_count, edges)`` over local ids ``0..n-1``.

    ``levels``/``branching`` size the trees (``levels`` counts the root level),
    ``width``/``stages`` the fork-join, ``length`` the chain.
    """
    if kind in ("out_tree", "in_tree"):
        if levels < 1 or branching < 1:
            raise WorkloadError("trees need levels >= 1 and branching >= 1")
        edges = []
        frontier = [0]
        n = 1
        for _ in range(levels - 1):
            nxt = []
            for parent in frontier:
                for _ in range(branching):
                    edges.append((parent, n))
                    nxt.append(n)
                    n += 1
            frontier = nxt
        if kind == "in_tree":
            edges = [(b, a) for a, b in edges]
        return n, edges
    if kind == "fork_join":
        if width < 1 or stages < 1:
            raise WorkloadError("fork-join needs width >= 1 and stages >= 1")
        edges = []
        source = 0
        n = 1
        for _ in range(stages):
            branch = list(range(n, n + width))
            sink = n + width
            edges += [(source, b) for b in branch] + [(b, sink) for b in branch]
            n = sink + 1
            source = sink
        return n, edges
    if kind == "chain":
        if length < 1:
            raise WorkloadError("chain needs length >= 1")
        return length, [(i, i + 1) for i in range(length - 1)]
    raise WorkloadError(f"unknown topology {kind!r}")


def gen_network(node_count: int, speeds: TruncatedGaussianMixture, strengths: TruncatedGaussianMixture,
                rng: np.random.Generator) -> Network:
    if node_count < 1:
        raise WorkloadError("node_count must be at least 1")
    ids = [f"n{i}" for i in range(node_count)]
    speed = {v: sample_mixture(speeds, rng) for v in ids}
    links = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            links[frozenset((a, b))] = sample_mixture(strengths, rng)
    return Network(speed, links)


def homogeneous_network(node_count: int, speed: float = 1.0, strength: float = 1.0) -> Network:
    ids = [f"n{i}" for i in range(node_count)]
    return Network({v: speed for v in ids},
                   {frozenset((a, b)): strength for i, a in enumerate(ids) for b in ids[i + 1:]})


def gen_arrivals(graph_count: int, process: str, param: float, rng: np.random.Generator) -> List[float]:
    """Arrival times starting at 0.

    ``process`` is ``"poisson"`` (``param`` is the rate) or ``"fixed_interval"``
    (``param`` is the gap).
    """
    if not param > 0:
        raise WorkloadError(f"arrival parameter must be positive, got {param}")
    if graph_count <= 0:
        return []
    if process == "fixed_interval":
        return [i * float(param) for i in range(graph_count)]
    if process == "poisson":
        gaps = rng.exponential(1.0 / param, size=graph_count - 1)
        return [0.0] + np.cumsum(gaps).tolist()
    raise WorkloadError(f"unknown arrival process {process!r}")


def ccr(graph: TaskGraph, network: Network) -> float:
    """Mean edge communication time over mean task computation time on ``network``.

    Communication is averaged over distinct node pairs, computation over nodes.
    """
    if not graph.edges:
        return 0.0
    if not network.links:
        raise WorkloadError("CCR needs a network with at least two nodes")
    inv_link = float(np.mean([1.0 / s for s in network.links.values()]))
    inv_speed = float(np.mean([1.0 / s for s in network.speeds.values()]))
    comm = float(np.mean(list(graph.edges.values()))) * inv_link
    comp = float(np.mean(list(graph.tasks.values()))) * inv_speed
    return comm / comp


def gen_adversarial(successor_count: int, ccr_target: float, root_cost: float, rng: np.random.Generator,
                    graph_index: int = 0, arrival_time: float = 0.0, noise: float = 0.1,
                    reference: Optional[Network] = None) -> TaskGraph:
    """Depth-one out-tree: one heavy root, ``successor_count`` light children.

    Children cost ``root_cost / successor_count`` scaled by a uniform factor in
    ``[1 - noise, 1 + noise]``. Edge sizes are rescaled so that :func:`ccr`
    over ``reference`` (default: two unit nodes, unit link) hits ``ccr_target``.
    """
    if successor_count < 1:
        raise WorkloadError("successor_count must be at least 1")
    if not ccr_target > 0 or not root_cost > 0:
        raise WorkloadError("ccr and root_cost must be positive")
    if not 0 <= noise < 1:
        raise WorkloadError("noise must be in [0, 1)")
    reference = reference or homogeneous_network(2)
    child = root_cost / successor_count
    costs = [float(root_cost)] + (child * rng.uniform(1 - noise, 1 + noise, size=successor_count)).tolist()
    raw = rng.uniform(1 - noise, 1 + noise, size=successor_count)
    tasks = {TaskId(graph_index, i): c for i, c in enumerate(costs)}
    draft = TaskGraph(tasks, {(TaskId(graph_index, 0), TaskId(graph_index, i + 1)): float(r)
                              for i, r in enumerate(raw)}, arrival_time)
    scale = ccr_target / ccr(draft, reference)
    edges = {e: d * scale for e, d in draft.edges.items()}
    return TaskGraph(tasks, edges, arrival_time)


@dataclass
class WorkloadSpec:
    """Everything needed to regenerate a workload from a seed.

    ``kind`` is ``"synthetic"`` or ``"adversarial"``; the ``adversarial_*``
    fields only apply to the latter, the topology fields only to the former.
    """

    kind: str = "synthetic"
    graph_count: int = 100
    topology_mix: Dict[str, float] = field(default_factory=lambda: {k: 0.25 for k in TOPOLOGIES})
    tree_levels: Tuple[int, int] = (2, 4)
    tree_branching: Tuple[int, int] = (2, 3)
    fork_width: Tuple[int, int] = (2, 5)
    fork_stages: Tuple[int, int] = (1, 3)
    chain_length: Tuple[int, int] = (3, 10)
    task_weights: TruncatedGaussianMixture = DEFAULT_TASK_WEIGHTS
    edge_weights: TruncatedGaussianMixture = DEFAULT_EDGE_WEIGHTS
    node_count: int = 4
    node_speeds: TruncatedGaussianMixture = DEFAULT_SPEEDS
    link_strengths: TruncatedGaussianMixture = DEFAULT_STRENGTHS
    arrival_process: str = "poisson"
    arrival_param: float = 0.05
    adversarial_successors: int = 12
    adversarial_root_cost: float = 60.0
    adversarial_ccr: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("synthetic", "adversarial"):
            raise WorkloadError(f"unknown workload kind {self.kind!r}")
        if self.graph_count <= 0 or self.node_count <= 0:
            raise WorkloadError("graph_count and node_count must be positive")
        for k in self.topology_mix:
            if k not in TOPOLOGIES:
                raise WorkloadError(f"unknown topology {k!r} in mix")
        props = list(self.topology_mix.values())
        if any(p < 0 for p in props) or not math.isclose(sum(props), 1.0, abs_tol=1e-9):
            raise WorkloadError("topology proportions must be nonnegative and sum to 1")
        for name in ("tree_levels", "tree_branching", "fork_width", "fork_stages", "chain_length"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise WorkloadError(f"{name} must satisfy 1 <= low <= high")
            setattr(self, name, (int(lo), int(hi)))
        for name in ("task_weights", "edge_weights", "node_speeds", "link_strengths"):
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, TruncatedGaussianMixture.from_dict(v))

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise WorkloadError(f"unknown workload fields: {sorted(unknown)}")
        kw = dict(d)
        for name in ("tree_levels", "tree_branching", "fork_width", "fork_stages", "chain_length"):
            if name in kw:
                kw[name] = tuple(kw[name])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, TruncatedGaussianMixture):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _topology_quota(mix: Dict[str, float], count: int) -> List[str]:
    # Largest-remainder apportionment: exact proportions up to rounding.
    kinds = [k for k in TOPOLOGIES if mix.get(k, 0) > 0]
    raw = [mix[k] * count for k in kinds]
    base = [int(math.floor(x)) for x in raw]
    order = sorted(range(len(kinds)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:count - sum(base)]:
        base[i] += 1
    return [k for k, n in zip(kinds, base) for _ in range(n)]


def _sized_topology(kind: str, spec: WorkloadSpec, rng: np.random.Generator):
    def pick(bounds):
        return int(rng.integers(bounds[0], bounds[1] + 1))

    if kind in ("out_tree", "in_tree"):
        return gen_topology(kind, levels=pick(spec.tree_levels), branching=pick(spec.tree_branching))
    if kind == "fork_join":
        return gen_topology(kind, width=pick(spec.fork_width), stages=pick(spec.fork_stages))
    return gen_topology(kind, length=pick(spec.chain_length))


def generate_workload(spec: WorkloadSpec, seed: Optional[int] = None) -> Tuple[Network, List[TaskGraph]]:
    """Network and arrival-ordered graphs for ``spec``; ``seed`` overrides ``spec.seed``.

    Independent streams are spawned from the master seed: one for the network,
    one for arrivals, one for the topology order, and one per graph.
    """
    seed = spec.seed if seed is None else seed
    ss = np.random.SeedSequence(seed)
    net_ss, arr_ss, mix_ss, graph_ss = ss.spawn(4)
    network = gen_network(spec.node_count, spec.node_speeds, spec.link_strengths, np.random.default_rng(net_ss))
    arrivals = gen_arrivals(spec.graph_count, spec.arrival_process, spec.arrival_param,
                            np.random.default_rng(arr_ss))
    streams = [np.random.default_rng(s) for s in graph_ss.spawn(spec.graph_count)]

    graphs = []
    if spec.kind == "adversarial":
        for i, (a, rng) in enumerate(zip(arrivals, streams)):
            graphs.append(gen_adversarial(spec.adversarial_successors, spec.adversarial_ccr,
                                          spec.adversarial_root_cost, rng, graph_index=i,
                                          arrival_time=a, reference=network if spec.node_count > 1 else None))
        return network, graphs

    kinds = _topology_quota(spec.topology_mix, spec.graph_count)
    np.random.default_rng(mix_ss).shuffle(kinds)
    for i, (kind, a, rng) in enumerate(zip(kinds, arrivals, streams)):
        n, skeleton = _sized_topology(kind, spec, rng)
        tasks = {TaskId(i, j): sample_mixture(spec.task_weights, rng) for j in range(n)}
        edges = {(TaskId(i, u), TaskId(i, v)): sample_mixture(spec.edge_weights, rng) for u, v in skeleton}
        graphs.append(TaskGraph(tasks, edges, a))
    return network, graphs


def graph_topology_kinds(spec: WorkloadSpec, seed: Optional[int] = None) -> List[str]:
    """Topology label of each synthetic graph, in arrival order."""
    seed = spec.seed if seed is None else seed
    _, _, mix_ss, _ = np.random.SeedSequence(seed).spawn(4)
    kinds = _topology_quota(spec.topology_mix, spec.graph_count)
    np.random.default_rng(mix_ss).shuffle(kinds)
    return kinds


WORKFLOW_SCHEMA = {
    "type": "object",
    "required": ["network", "graphs"],
    "properties": {
        "network": {
            "type": "object",
            "required": ["nodes"],
            "properties": {
                "nodes": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "required": ["id", "speed"],
                    "properties": {"id": {"type": "string"}, "speed": {"type": "number"}}}},
                "links": {"type": "array", "items": {
                    "type": "object", "required": ["a", "b", "strength"],
                    "properties": {"a": {"type": "string"}, "b": {"type": "string"},
                                   "strength": {"type": "number"}}}},
            },
        },
        "graphs": {"type": "array", "items": {
            "type": "object", "required": ["tasks"],
            "properties": {
                "arrival": {"type": "number"},
                "tasks": {"type": "array", "items": {
                    "type": "object", "required": ["id", "cost"],
                    "properties": {"id": {"type": "string"}, "cost": {"type": "number"}}}},
                "edges": {"type": "array", "items": {
                    "type": "object", "required": ["src", "dst", "size"],
                    "properties": {"src": {"type": "string"}, "dst": {"type": "string"},
                                   "size": {"type": "number"}}}},
            }}},
    },
}


def parse_workflow(doc: dict) -> Tuple[Network, List[TaskGraph]]:
    """Validate and convert an already-decoded workflow document."""
    try:
        jsonschema.validate(doc, WORKFLOW_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise WorkflowParseError(exc.message, exc.json_path) from None

    speeds = {}
    for i, n in enumerate(doc["network"]["nodes"]):
        if n["id"] in speeds:
            raise WorkflowParseError(f"duplicate node id {n['id']!r}", f"$.network.nodes[{i}].id")
        if not n["speed"] > 0:
            raise WorkflowValidationError(f"node {n['id']!r} has nonpositive speed {n['speed']}")
        speeds[n["id"]] = float(n["speed"])
    links = {}
    for i, link in enumerate(doc["network"].get("links", [])):
        a, b = link["a"], link["b"]
        if a not in speeds or b not in speeds or a == b:
            raise WorkflowParseError(f"link joins unknown or identical nodes {a!r}, {b!r}",
                                     f"$.network.links[{i}]")
        if not link["strength"] > 0:
            raise WorkflowValidationError(f"link {a!r}-{b!r} has nonpositive strength {link['strength']}")
        links[frozenset((a, b))] = float(link["strength"])
    try:
        network = Network(speeds, links)
    except GraphError as exc:
        raise WorkflowValidationError(str(exc)) from None

    graphs = []
    prev = 0.0
    for gi, g in enumerate(doc["graphs"]):
        gpath = f"$.graphs[{gi}]"
        arrival = float(g.get("arrival", 0.0))
        if arrival < 0:
            raise WorkflowValidationError(f"graph {gi} has negative arrival {arrival}")
        if arrival < prev:
            raise WorkflowParseError("graphs must be listed in nondecreasing arrival order", f"{gpath}.arrival")
        prev = arrival
        ids: Dict[str, TaskId] = {}
        tasks = {}
        for j, t in enumerate(g["tasks"]):
            if t["id"] in ids:
                raise WorkflowParseError(f"duplicate task id {t['id']!r}", f"{gpath}.tasks[{j}].id")
            if not t["cost"] > 0:
                raise WorkflowValidationError(f"task {t['id']!r} in graph {gi} has nonpositive cost {t['cost']}")
            ids[t["id"]] = TaskId(gi, j)
            tasks[ids[t["id"]]] = float(t["cost"])
        edges = {}
        for j, e in enumerate(g.get("edges", [])):
            for end in ("src", "dst"):
                if e[end] not in ids:
                    raise WorkflowParseError(f"unknown task {e[end]!r}", f"{gpath}.edges[{j}].{end}")
            if not e["size"] > 0:
                raise WorkflowValidationError(
                    f"edge {e['src']!r}->{e['dst']!r} in graph {gi} has nonpositive size {e['size']}")
            edges[(ids[e["src"]], ids[e["dst"]])] = float(e["size"])
        graph = TaskGraph(tasks, edges, arrival)
        check_acyclic(graph)
        graphs.append(graph)
    return network, graphs


def load_workflow_json(path) -> Tuple[Network, List[TaskGraph]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise WorkflowParseError(f"invalid JSON: {exc}") from None
    return parse_workflow(doc)


def workflow_to_dict(network: Network, graphs: Sequence[TaskGraph]) -> dict:
    nodes = network.nodes
    links = []
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            links.append({"a": a, "b": b, "strength": network.strength(a, b)})
    return {
        "network": {"nodes": [{"id": v, "speed": s} for v, s in network.speeds.items()], "links": links},
        "graphs": [
            {
                "arrival": g.arrival_time,
                "tasks": [{"id": str(t.local_id), "cost": c} for t, c in sorted(g.tasks.items())],
                "edges": [{"src": str(a.local_id), "dst": str(b.local_id), "size": d}
                          for (a, b), d in sorted(g.edges.items())],
            }
            for g in graphs
        ],
    }


def save_workflow_json(path, network: Network, graphs: Sequence[TaskGraph]) -> None:
    Path(path).write_text(json.dumps(workflow_to_dict(network, graphs), indent=1))
