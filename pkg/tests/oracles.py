"""Independent reference computations used by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

from ewginn.flownet import FlowNetwork, FlowNetworkError, orient_network
from ewginn.graph import erdos_renyi
from ewginn.layers import PoolKind
from ewginn.numerics import apply_activation


def brute_min_cut(net: FlowNetwork, cap) -> float:
    """Minimum s-t cut by enumerating every node subset containing s, not t."""
    others = [v for v in range(net.n_nodes) if v not in (net.source, net.sink)]
    best = math.inf
    for bits in itertools.product((0, 1), repeat=len(others)):
        side = {net.source} | {v for v, b in zip(others, bits) if b}
        value = math.fsum(c for (u, v), c in zip(net.edges, cap) if u in side and v not in side)
        best = min(best, value)
    return best


def random_network(rng: np.random.Generator, max_nodes: int = 12) -> FlowNetwork:
    while True:
        n = int(rng.integers(2, max_nodes + 1))
        p = float(rng.uniform(0.2, 0.8))
        g = erdos_renyi(n, p, rng, require_connected=True, max_tries=200)
        try:
            return orient_network(g)
        except FlowNetworkError:
            continue


def flow_violations(net: FlowNetwork, cap, flows) -> tuple[float, bool]:
    """Max conservation residual over inner nodes, and capacity feasibility."""
    balance = np.zeros(net.n_nodes)
    for (u, v), f in zip(net.edges, flows):
        balance[u] -= f
        balance[v] += f
    inner = [v for v in range(net.n_nodes) if v not in (net.source, net.sink)]
    residual = float(np.max(np.abs(balance[inner]))) if inner else 0.0
    feasible = bool(np.all(flows >= 0) and np.all(flows <= cap))
    return residual, feasible


def vertcat(X: np.ndarray) -> np.ndarray:
    """Stack the columns of an (n, K) matrix into one vector."""
    return X.T.reshape(-1)


def dense_layer_forward(layer, X: np.ndarray) -> np.ndarray:
    """Single-sample layer output through the materialized dense operator."""
    n, F = layer.n, layer.F
    M = layer.materialize_dense()
    z = M.T @ vertcat(X) + vertcat(layer.B)
    return apply_activation(layer.activation, z.reshape(F, n).T)


def dense_network_predict(net, C: np.ndarray) -> np.ndarray:
    out = []
    for c in C:
        X = c[:, None]
        for layer in net.layers:
            X = dense_layer_forward(layer, X)
        if net.pool is PoolKind.NONE:
            pooled = X[:, 0]
        elif net.pool is PoolKind.REDUCE_MAX:
            pooled = X.max(axis=1)
        else:
            pooled = X.mean(axis=1)
        out.append(pooled[net.mask])
    return np.array(out)
