"""GINN / EWGINN stacks with a pooled, masked regression head."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import AugmentedAdjacency, Graph, augmented_adjacency
from .layers import (
    EWGILayer,
    GILayer,
    PoolKind,
    layer_from_dict,
    mask_backward,
    mask_forward,
    pool_backward,
    pool_forward,
)
from .numerics import Activation, seeded_rng

__all__ = ["ModelConfig", "Network", "build_network", "load_checkpoint", "save_checkpoint"]

INIT_STREAM = 0
GRID_FEATURES = (1, 5, 10)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of one model.

    ``depth`` counts every graph layer, the linear output layer included:
    ``depth - 1`` layers use ``activation`` and the last one is linear.
    """

    layer_kind: str = "gi"
    depth: int = 3
    features: int = 1
    activation: str = "elu"
    pool: str = "none"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.layer_kind not in ("gi", "ewgi"):
            raise ValueError(f"layer_kind must be 'gi' or 'ewgi', got {self.layer_kind!r}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.features < 1:
            raise ValueError(f"features must be >= 1, got {self.features}")
        Activation(self.activation)
        pool = PoolKind(self.pool)
        if (pool is PoolKind.NONE) != (self.features == 1):
            raise ValueError("pool must be 'none' exactly when features == 1")

    @property
    def config_id(self) -> str:
        return f"{self.layer_kind}-{self.activation}-H{self.depth}-F{self.features}-{self.pool}"

    def to_dict(self) -> dict:
        return asdict(self)


class Network:
    """Stack of graph layers followed by feature pooling and an output mask.

    ``forward``/``predict`` take capacities shaped ``(N, n)`` and return
    ``(N, m)``. The flat parameter vector concatenates layers in order and,
    within a layer, its ``param_names`` in order, each raveled C-style.
    """

    def __init__(self, layers: list[GILayer], pool: PoolKind | str, mask, graph_hash: str = ""):
        if not layers:
            raise ValueError("network needs at least one layer")
        if layers[0].K != 1:
            raise ValueError("first layer must read one feature per node")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.F != nxt.K or prev.n != nxt.n:
                raise ValueError(f"incompatible layers {prev!r} -> {nxt!r}")
        self.layers = layers
        self.pool = PoolKind(pool)
        self.mask = np.asarray(mask, dtype=np.int64)
        self.graph_hash = graph_hash
        self.n = layers[0].n
        self._cache: list | None = None
        mask_forward(np.zeros(self.n), self.mask)

    @property
    def m(self) -> int:
        return int(self.mask.size)

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def _run(self, C: np.ndarray):
        C = np.asarray(C, dtype=np.float64)
        if C.ndim != 2 or C.shape[1] != self.n:
            raise ValueError(f"capacities must be (N, {self.n}), got {C.shape}")
        X = C.T[:, :, None]
        trace = []
        for layer in self.layers:
            Z, Y = layer.forward(X)
            trace.append((X, Z))
            X = Y
        pooled = pool_forward(X, self.pool)
        out = mask_forward(pooled, self.mask).T
        return out, trace, X

    def predict(self, C) -> np.ndarray:
        return self._run(C)[0]

    def forward(self, C) -> np.ndarray:
        """Like :meth:`predict`, and caches what :meth:`backward` needs."""
        out, trace, last = self._run(C)
        self._cache = [trace, last]
        return out

    def backward(self, d_out) -> np.ndarray:
        """Flat parameter gradient for upstream gradient ``d_out`` ``(N, m)``."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        trace, last = self._cache
        d_out = np.asarray(d_out, dtype=np.float64)
        if d_out.shape != (last.shape[1], self.m):
            raise ValueError(f"upstream gradient must be {(last.shape[1], self.m)}")
        d_pooled = mask_backward(d_out.T, self.mask, self.n)
        dY = pool_backward(last, d_pooled, self.pool)
        pieces = []
        for layer, (X, Z) in zip(reversed(self.layers), reversed(trace)):
            g = layer.backward(X, dY, Z)
            pieces.append(np.concatenate([g.params[k].ravel() for k in layer.param_names]))
            dY = g.dX
        return np.concatenate(pieces[::-1])

    def get_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for layer in self.layers for p in layer.params.values()])

    def set_params(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        pos = 0
        for layer in self.layers:
            for name, p in layer.params.items():
                setattr(layer, name, theta[pos : pos + p.size].reshape(p.shape).copy())
                pos += p.size
        self._cache = None

    def to_dict(self) -> dict:
        return {
            "graph_hash": self.graph_hash,
            "pool": self.pool.value,
            "mask": self.mask.tolist(),
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict, adj: AugmentedAdjacency) -> Network:
        layers = [layer_from_dict(d, adj) for d in data["layers"]]
        return cls(layers, data["pool"], data["mask"], data.get("graph_hash", ""))


def build_network(
    cfg: ModelConfig, adj: AugmentedAdjacency, sink_incoming, graph_hash: str = ""
) -> Network:
    """Glorot-initialized network for ``cfg`` on the graph behind ``adj``."""
    cls = EWGILayer if cfg.layer_kind == "ewgi" else GILayer
    rng = seeded_rng(cfg.seed, INIT_STREAM)
    F = cfg.features
    layers = []
    for i in range(cfg.depth):
        K = 1 if i == 0 else F
        act = Activation.LINEAR if i == cfg.depth - 1 else cfg.activation
        layers.append(cls.initialized(adj, K, F, act, rng))
    return Network(layers, cfg.pool, sink_incoming, graph_hash)


def network_for_graph(cfg: ModelConfig, g: Graph, sink_incoming) -> Network:
    return build_network(cfg, augmented_adjacency(g), sink_incoming, g.content_hash())


def save_checkpoint(net: Network, path: str | Path, extra: dict | None = None) -> None:
    data = net.to_dict()
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, sort_keys=True))


def load_checkpoint(path: str | Path, g: Graph) -> Network:
    """Load a checkpoint, refusing one built against a different graph."""
    data = json.loads(Path(path).read_text())
    if data.get("graph_hash") and data["graph_hash"] != g.content_hash():
        raise ValueError("checkpoint graph hash does not match the dataset graph")
    return Network.from_dict(data, augmented_adjacency(g))


def params_digest(net: Network) -> str:
    return hashlib.sha256(net.get_params().tobytes()).hexdigest()
