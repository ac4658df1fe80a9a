"""Capacitated flow networks, Dinic max-flow and max-flow datasets.

A :class:`FlowNetwork` is obtained from an undirected :class:`~ewginn.graph.Graph`
by :func:`orient_network`. Datasets pair i.i.d. capacity vectors with the
flows on the sink-incoming edges of a maximum flow.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from .graph import Graph, line_graph
from .numerics import seeded_rng

__all__ = [
    "FlowNetwork",
    "FlowLabel",
    "Dataset",
    "FlowNetworkError",
    "orient_network",
    "sample_capacities",
    "max_flow",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
]


class FlowNetworkError(ValueError):
    pass


@dataclass(frozen=True)
class FlowNetwork:
    """Directed network with a single source and sink.

    Edge order is significant: it fixes the capacity-vector layout and the
    node order of the line graph the models are built on.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    source: int
    sink: int

    def __post_init__(self) -> None:
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        if not edges:
            raise FlowNetworkError("network has no edges")
        for u, v in edges:
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes) or u == v:
                raise FlowNetworkError(f"invalid edge ({u}, {v})")
            if v == self.source:
                raise FlowNetworkError(f"edge ({u}, {v}) enters the source")
            if u == self.sink:
                raise FlowNetworkError(f"edge ({u}, {v}) leaves the sink")
        if len(set(edges)) != len(edges):
            raise FlowNetworkError("duplicate edges")
        if not self.sink_incoming:
            raise FlowNetworkError("no edge enters the sink")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def sink_incoming(self) -> tuple[int, ...]:
        return tuple(i for i, (_, v) in enumerate(self.edges) if v == self.sink)

    @property
    def m(self) -> int:
        return len(self.sink_incoming)

    @cached_property
    def line_graph(self) -> Graph:
        return line_graph(self)

    def to_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "edges": [list(e) for e in self.edges],
            "source": self.source,
            "sink": self.sink,
        }

    @classmethod
    def from_dict(cls, data: dict) -> FlowNetwork:
        return cls(
            int(data["n_nodes"]),
            tuple(tuple(e) for e in data["edges"]),
            int(data["source"]),
            int(data["sink"]),
        )


def orient_network(g: Graph) -> FlowNetwork:
    """Turn a connected undirected graph into a source/sink flow network.

    The source is node 0 and the sink the node farthest from it in BFS hops
    (lowest index on ties). When the graph plus a source-sink edge is
    biconnected, edges follow an st-numbering, so every edge lies on some
    source-to-sink path and none is lost. Otherwise edges point from the
    endpoint nearer the source to the farther one; between equidistant
    endpoints an edge points into the sink if it touches it, else from the
    lower index to the higher, and edges off every source-to-sink path are
    dropped. Surviving nodes are relabelled in increasing order, so the
    source stays node 0. Edge order follows ``g.edges``.
    """
    if g.n < 2:
        raise FlowNetworkError("need at least two nodes")
    dist = g.bfs_distances(0)
    if np.any(dist < 0):
        raise FlowNetworkError("graph is not connected")
    source = 0
    sink = int(np.argmax(dist))

    order = st_numbering(g, source, sink)
    if order is not None:
        position = {v: i for i, v in enumerate(order)}

        def rank(v: int):
            return position[v]

    else:

        def rank(v: int):
            return (int(dist[v]), int(v == sink), v)

    oriented = [(i, j) if rank(i) < rank(j) else (j, i) for i, j in g.edges]

    out_adj: dict[int, list[int]] = {}
    in_adj: dict[int, list[int]] = {}
    for u, v in oriented:
        out_adj.setdefault(u, []).append(v)
        in_adj.setdefault(v, []).append(u)
    from_source = _reach(source, out_adj)
    to_sink = _reach(sink, in_adj)
    kept = [
        (u, v)
        for u, v in oriented
        if u in from_source and v in to_sink and v != source and u != sink
    ]
    if not kept:
        raise FlowNetworkError("no source-to-sink path")
    nodes = sorted({x for e in kept for x in e})
    relabel = {old: new for new, old in enumerate(nodes)}
    return FlowNetwork(
        n_nodes=len(nodes),
        edges=tuple((relabel[u], relabel[v]) for u, v in kept),
        source=relabel[source],
        sink=relabel[sink],
    )


def st_numbering(g: Graph, s: int, t: int) -> list[int] | None:
    """Node order from ``s`` to ``t`` in which every other node has a neighbour
    before and after it, or ``None`` when ``g`` plus edge ``{s, t}`` is not
    biconnected (Tarjan's lowpoint construction).
    """
    if s == t:
        return None
    nbrs = [list(x) for x in g.neighbors]
    if t not in nbrs[s]:
        nbrs[s].append(t)
        nbrs[t].append(s)
    # t first among the source's neighbours, so it is the root's only child
    nbrs[s].sort(key=lambda v: (v != t, v))
    pre = [-1] * g.n
    parent = [-1] * g.n
    low = [0] * g.n
    preorder: list[int] = []
    pre[s] = 0
    low[s] = 0
    preorder.append(s)
    stack = [(s, iter(nbrs[s]))]
    while stack:
        v, it = stack[-1]
        for w in it:
            if pre[w] < 0:
                parent[w] = v
                pre[w] = low[w] = len(preorder)
                preorder.append(w)
                stack.append((w, iter(nbrs[w])))
                break
            if w != parent[v]:
                low[v] = min(low[v], pre[w])
        else:
            stack.pop()
            if stack:
                u = stack[-1][0]
                low[u] = min(low[u], low[v])
                if u != s and low[v] >= pre[u]:
                    return None
    if len(preorder) != g.n or sum(parent[v] == s for v in range(g.n)) != 1:
        return None

    by_pre = preorder
    nxt = {s: t, t: None}
    prv = {s: None, t: s}
    negative = {s: True}
    for v in preorder[2:]:
        p = parent[v]
        if negative.get(by_pre[low[v]], False):
            before = prv[p]
            prv[v], nxt[v] = before, p
            nxt[before] = v
            prv[p] = v
            negative[p] = False
        else:
            after = nxt[p]
            prv[v], nxt[v] = p, after
            nxt[p] = v
            if after is not None:
                prv[after] = v
            negative[p] = True
    order = []
    v: int | None = s
    while v is not None:
        order.append(v)
        v = nxt[v]
    return order


def _reach(start: int, adj: dict[int, list[int]]) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def sample_capacities(net: FlowNetwork, n_samples: int, seed: int) -> np.ndarray:
    """``(n_samples, n_edges)`` capacities drawn i.i.d. from Uniform(0, 1].

    Sample ``i`` uses its own stream derived from ``(seed, i)``.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    out = np.empty((n_samples, net.n_edges))
    for i in range(n_samples):
        out[i] = 1.0 - seeded_rng(seed, i).random(net.n_edges)
    return out


@dataclass(frozen=True)
class FlowLabel:
    phi_vec: np.ndarray
    edge_flows: np.ndarray = field(repr=False)

    @property
    def phi(self) -> float:
        return math.fsum(self.phi_vec)


def max_flow(net: FlowNetwork, capacities) -> FlowLabel:
    """Exact maximum flow by Dinic's algorithm.

    Arcs are scanned in edge-list order, so the returned flow assignment (not
    only its value) is a deterministic function of the capacities.
    """
    cap = np.asarray(capacities, dtype=np.float64)
    if cap.shape != (net.n_edges,):
        raise ValueError(f"expected {net.n_edges} capacities, got shape {cap.shape}")
    if np.any(cap < 0) or not np.all(np.isfinite(cap)):
        raise ValueError("capacities must be finite and nonnegative")
    cap_list = cap.tolist()
    flow = [0.0] * net.n_edges
    # arc 2e is edge e forward, arc 2e+1 its reverse
    adj: list[list[int]] = [[] for _ in range(net.n_nodes)]
    head: list[int] = []
    for e, (u, v) in enumerate(net.edges):
        adj[u].append(2 * e)
        adj[v].append(2 * e + 1)
        head.extend((v, u))

    def residual(arc: int) -> float:
        e = arc >> 1
        return cap_list[e] - flow[e] if arc & 1 == 0 else flow[e]

    def push(arc: int, amount: float, res: float) -> None:
        e = arc >> 1
        if arc & 1 == 0:
            flow[e] = cap_list[e] if amount >= res else min(flow[e] + amount, cap_list[e])
        else:
            flow[e] = 0.0 if amount >= res else max(flow[e] - amount, 0.0)

    s, t = net.source, net.sink
    while True:
        level = [-1] * net.n_nodes
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for arc in adj[u]:
                v = head[arc]
                if level[v] < 0 and residual(arc) > 0.0:
                    level[v] = level[u] + 1
                    queue.append(v)
        if level[t] < 0:
            break
        it = [0] * net.n_nodes

        def augment(u: int, limit: float) -> float:
            if u == t:
                return limit
            arcs = adj[u]
            while it[u] < len(arcs):
                arc = arcs[it[u]]
                v = head[arc]
                res = residual(arc)
                if res > 0.0 and level[v] == level[u] + 1:
                    pushed = augment(v, min(limit, res))
                    if pushed > 0.0:
                        push(arc, pushed, res)
                        return pushed
                it[u] += 1
            return 0.0

        while augment(s, math.inf) > 0.0:
            pass

    edge_flows = np.array(flow)
    return FlowLabel(edge_flows[list(net.sink_incoming)], edge_flows)


@dataclass
class Dataset:
    network: FlowNetwork
    capacities: np.ndarray
    flows: np.ndarray
    seed: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.capacities = np.asarray(self.capacities, dtype=np.float64)
        self.flows = np.asarray(self.flows, dtype=np.float64)
        if self.capacities.ndim != 2 or self.capacities.shape[1] != self.network.n_edges:
            raise ValueError(f"capacities must be (N, {self.network.n_edges})")
        if self.flows.shape != (self.capacities.shape[0], self.network.m):
            raise ValueError(f"flows must be (N, {self.network.m})")

    def __len__(self) -> int:
        return self.capacities.shape[0]

    @property
    def sink_incoming(self) -> tuple[int, ...]:
        return self.network.sink_incoming

    def subset(self, rows) -> Dataset:
        return Dataset(
            self.network, self.capacities[rows], self.flows[rows], self.seed, self.provenance
        )

    def to_dict(self) -> dict:
        return {
            "network": self.network.to_dict(),
            "seed": self.seed,
            "sink_incoming": list(self.sink_incoming),
            "capacities": self.capacities.tolist(),
            "flows": self.flows.tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Dataset:
        net = FlowNetwork.from_dict(data["network"])
        if list(net.sink_incoming) != list(data["sink_incoming"]):
            raise ValueError("sink_incoming does not match the embedded network")
        return cls(
            network=net,
            capacities=np.array(data["capacities"], dtype=np.float64).reshape(-1, net.n_edges),
            flows=np.array(data["flows"], dtype=np.float64).reshape(-1, net.m),
            seed=int(data["seed"]),
            provenance=data.get("provenance", {}),
        )

    def content_hash(self) -> str:
        return hashlib.sha256(_dumps(self.to_dict()).encode()).hexdigest()


def generate_dataset(net: FlowNetwork, n_samples: int, seed: int) -> Dataset:
    caps = sample_capacities(net, n_samples, seed)
    flows = np.stack([max_flow(net, row).phi_vec for row in caps])
    return Dataset(
        network=net,
        capacities=caps,
        flows=flows,
        seed=seed,
        provenance={
            "generator": f"ewginn {__version__}",
            "capacity_distribution": "uniform(0, 1]",
            "solver": "dinic, edge-list arc order",
        },
    )


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_dataset(data: Dataset, path: str | Path) -> None:
    Path(path).write_text(_dumps(data.to_dict()))


def load_dataset(path: str | Path) -> Dataset:
    return Dataset.from_dict(json.loads(Path(path).read_text()))
