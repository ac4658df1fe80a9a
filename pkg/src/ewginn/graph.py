"""Undirected simple graphs, random generators and line graphs.

Every layer in :mod:`ewginn.layers` works on the self-loop-augmented
adjacency ``A + I`` of a :class:`Graph`, stored in CSR form.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

__all__ = [
    "Graph",
    "AugmentedAdjacency",
    "GraphError",
    "barabasi_albert",
    "erdos_renyi",
    "line_graph",
    "augmented_adjacency",
]


class GraphError(ValueError):
    """Invalid graph construction or generator parameters."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph over nodes ``0..n-1``.

    ``edges`` keeps insertion order; each pair is stored as ``(i, j)`` with
    ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.n < 1:
            raise GraphError(f"node count must be positive, got {self.n}")
        normalized = []
        seen = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            pair = (min(i, j), max(i, j))
            if pair in seen:
                raise GraphError(f"duplicate edge {pair}")
            seen.add(pair)
            normalized.append(pair)
        object.__setattr__(self, "edges", tuple(normalized))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> sparse.csr_array:
        """Binary symmetric adjacency in CSR form."""
        if not self.edges:
            return sparse.csr_array((self.n, self.n), dtype=np.float64)
        e = np.asarray(self.edges, dtype=np.int64)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(rows.size, dtype=np.float64)
        return sparse.csr_array((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(x)) for x in nbrs)

    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self.neighbors], dtype=np.int64)

    def bfs_distances(self, source: int) -> np.ndarray:
        """Hop distances from ``source``; ``-1`` marks unreachable nodes."""
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.neighbors[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def is_connected(self) -> bool:
        return bool(np.all(self.bfs_distances(0) >= 0))

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data: dict) -> Graph:
        return cls(int(data["n"]), tuple(tuple(e) for e in data["edges"]))

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class AugmentedAdjacency:
    """``A + I`` for a graph, in CSR form with binary entries."""

    n: int
    matrix: sparse.csr_array = field(repr=False)

    @cached_property
    def matrix_t(self) -> sparse.csr_array:
        return self.matrix.T.tocsr()

    def t_apply(self, values: np.ndarray) -> np.ndarray:
        """``Â^T`` applied along axis 0 of ``values`` (shape ``(n, ...)``)."""
        return _apply_along_nodes(self.matrix_t, values, self.n)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """``Â`` applied along axis 0 of ``values``."""
        return _apply_along_nodes(self.matrix, values, self.n)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _apply_along_nodes(mat: sparse.csr_array, values: np.ndarray, n: int) -> np.ndarray:
    if values.shape[0] != n:
        raise ValueError(f"leading dimension {values.shape[0]} does not match n={n}")
    if values.ndim <= 2:
        return mat @ values
    flat = values.reshape(n, -1)
    return (mat @ flat).reshape(values.shape)


def augmented_adjacency(g: Graph) -> AugmentedAdjacency:
    mat = (g.adjacency + sparse.identity(g.n, dtype=np.float64, format="csr")).tocsr()
    mat.sort_indices()
    return AugmentedAdjacency(g.n, mat)


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def barabasi_albert(n: int, m_attach: int, seed: int | np.random.Generator) -> Graph:
    """Preferential-attachment graph grown from an ``(m_attach + 1)``-clique.

    Each new node links to ``m_attach`` distinct existing nodes drawn with
    probability proportional to their current degree.
    """
    if not 1 <= m_attach < n:
        raise GraphError(f"need 1 <= m_attach < n, got m_attach={m_attach}, n={n}")
    rng = _rng(seed)
    core = m_attach + 1
    edges = [(i, j) for i in range(core) for j in range(i + 1, core)]
    deg = np.zeros(n, dtype=np.float64)
    deg[:core] = m_attach
    for v in range(core, n):
        existing = np.arange(v)
        p = deg[:v] / deg[:v].sum()
        targets = rng.choice(existing, size=m_attach, replace=False, p=p)
        for u in sorted(int(t) for t in targets):
            edges.append((u, v))
            deg[u] += 1
        deg[v] = m_attach
    return Graph(n, tuple(edges))


def erdos_renyi(
    n: int,
    p: float,
    seed: int | np.random.Generator,
    *,
    require_connected: bool = False,
    max_tries: int = 100,
) -> Graph:
    """G(n, p) graph; pairs are visited in lexicographic order.

    With ``require_connected`` disconnected draws are discarded and redrawn
    from the same stream, up to ``max_tries`` attempts.
    """
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"edge probability must lie in [0, 1], got {p}")
    if n < 1:
        raise GraphError(f"node count must be positive, got {n}")
    rng = _rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_tries):
        keep = rng.random(iu.size) < p
        g = Graph(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))
        if not require_connected or g.is_connected():
            return g
    raise GraphError(f"no connected G({n}, {p}) draw in {max_tries} tries")


def line_graph(network) -> Graph:
    """Line graph of a network whose ``edges`` are ``(tail, head)`` pairs.

    Node ``e`` of the result is edge ``e`` of the network; two nodes are
    adjacent iff the edges share an endpoint (direction is ignored).
    """
    edges: Sequence[tuple[int, int]] = network.edges
    if len(edges) == 0:
        raise GraphError("line graph of an empty network")
    incident: dict[int, list[int]] = {}
    for idx, (u, v) in enumerate(edges):
        incident.setdefault(u, []).append(idx)
        incident.setdefault(v, []).append(idx)
    pairs: set[tuple[int, int]] = set()
    for members in incident.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                x, y = members[a], members[b]
                if x != y:
                    pairs.add((min(x, y), max(x, y)))
    return Graph(len(edges), tuple(sorted(pairs)))

