"""GI and EWGI layers with hand-derived backward passes.

Activations use a node-first layout: a single sample is an ``(n, K)`` array
and a batch is ``(n, batch, K)``. Node-first keeps every sparse product a
plain ``Â @ (n, rest)`` multiplication.

Both layers compute, for every input feature ``k`` and output feature ``l``,
``S[:, k, l] = Â^T (w_out[:, k, l] * X[:, k])``. The GI layer sums ``S`` over
``k``; the EWGI layer first rescales it by the incoming weights
``w_in[:, k, l]``. With ``w_in == 1`` the two are therefore bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graph import AugmentedAdjacency
from .numerics import Activation, activation_derivative, apply_activation, glorot_uniform

__all__ = [
    "GILayer",
    "EWGILayer",
    "LayerGradients",
    "PoolKind",
    "count_weights",
    "weight_count_formula",
    "pool_forward",
    "pool_backward",
    "mask_forward",
    "mask_backward",
    "layer_from_dict",
    "MAX_DENSE_ENTRIES",
]

MAX_DENSE_ENTRIES = 10**7


class PoolKind(str, Enum):
    REDUCE_MAX = "reduce_max"
    REDUCE_MEAN = "reduce_mean"
    NONE = "none"


@dataclass
class LayerGradients:
    params: dict[str, np.ndarray]
    dX: np.ndarray


def _as_batch(X: np.ndarray, n: int, width: int, name: str) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[:, None, :]
    if X.ndim != 3 or X.shape[0] != n or X.shape[2] != width:
        raise ValueError(f"{name} must be ({n}, {width}) or ({n}, batch, {width}), got {X.shape}")
    return X, single


class GILayer:
    """Graph-Instructed layer: ``Z[:, l] = sum_k Â^T (w[:, k, l] * X[:, k]) + B[:, l]``.

    ``W`` has shape ``(n, K, F)``; ``W[:, k, l]`` is the per-node weight vector
    scaling what each node sends for the (k, l) feature pair.
    """

    kind = "gi"
    param_names: tuple[str, ...] = ("W", "B")

    def __init__(
        self,
        adj: AugmentedAdjacency,
        K: int,
        F: int,
        activation: Activation | str = Activation.LINEAR,
        *,
        W: np.ndarray | None = None,
        B: np.ndarray | None = None,
    ) -> None:
        if K < 1 or F < 1:
            raise ValueError("K and F must be positive")
        self.adj = adj
        self.n = adj.n
        self.K = K
        self.F = F
        self.activation = Activation(activation)
        self.W = self._check("W", W, (self.n, K, F), np.ones)
        self.B = self._check("B", B, (self.n, F), np.zeros)

    @staticmethod
    def _check(name, value, shape, default) -> np.ndarray:
        if value is None:
            return default(shape)
        value = np.array(value, dtype=np.float64)
        if value.shape != shape:
            raise ValueError(f"{name} must have shape {shape}, got {value.shape}")
        return value

    @classmethod
    def initialized(
        cls,
        adj: AugmentedAdjacency,
        K: int,
        F: int,
        activation: Activation | str,
        rng: np.random.Generator,
    ):
        """Glorot-uniform weights (fan_in = nK, fan_out = nF), zero biases."""
        n = adj.n
        weights = {
            name: glorot_uniform(n * K, n * F, (n, K, F), rng)
            for name in cls.param_names
            if name != "B"
        }
        return cls(adj, K, F, activation, **weights)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.param_names}

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _w_in(self) -> np.ndarray | None:
        return None

    def _w_out(self) -> np.ndarray:
        return self.W

    def _sent(self, X: np.ndarray) -> np.ndarray:
        # (n, b, K, F): Â^T applied to the rescaled outgoing features
        return self.adj.t_apply(X[:, :, :, None] * self._w_out()[:, None, :, :])

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(Z, Y)``, the pre-activation and the activated output."""
        Xb, single = _as_batch(X, self.n, self.K, "X")
        S = self._sent(Xb)
        w_in = self._w_in()
        if w_in is not None:
            S = w_in[:, None, :, :] * S
        Z = S.sum(axis=2) + self.B[:, None, :]
        Y = apply_activation(self.activation, Z)
        if single:
            return Z[:, 0, :], Y[:, 0, :]
        return Z, Y

    def backward(self, X: np.ndarray, dY: np.ndarray, Z: np.ndarray) -> LayerGradients:
        """Gradients summed over the batch for upstream gradient ``dY``."""
        Xb, single = _as_batch(X, self.n, self.K, "X")
        dYb, _ = _as_batch(dY, self.n, self.F, "dY")
        Zb, _ = _as_batch(Z, self.n, self.F, "Z")
        dZ = dYb * activation_derivative(self.activation, Zb)
        grads, dX = self._backward(Xb, dZ)
        grads["B"] = dZ.sum(axis=1)
        return LayerGradients(grads, dX[:, 0, :] if single else dX)

    def _backward(self, X: np.ndarray, dZ: np.ndarray):
        G = self.adj.apply(dZ)
        gW = np.einsum("nbk,nbl->nkl", X, G)
        dX = np.einsum("nkl,nbl->nbk", self.W, G)
        return {"W": gW}, dX

    def materialize_dense(self) -> np.ndarray:
        """Dense ``(nK, nF)`` operator ``M`` with ``vertcat(Z - B) = M^T vertcat(X)``.

        ``vertcat`` stacks columns, so row ``k*n + i`` is input node ``i``,
        feature ``k``, and column ``l*n + j`` is output node ``j``, feature ``l``.
        """
        n, K, F = self.n, self.K, self.F
        if (n * K) * (n * F) > MAX_DENSE_ENTRIES:
            raise ValueError(f"dense operator would have {(n * K) * (n * F)} entries")
        a_hat = self.adj.toarray()
        w_in = self._w_in()
        if w_in is None:
            w_in = np.ones((n, K, F))
        dense = np.einsum("ikl,ij,jkl->kilj", self._w_out(), a_hat, w_in)
        return dense.reshape(K * n, F * n)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "K": self.K,
            "F": self.F,
            "activation": self.activation.value,
            "params": {name: p.reshape(-1).tolist() for name, p in self.params.items()},
        }

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(n={self.n}, K={self.K}, F={self.F}, "
            f"activation={self.activation.value!r})"
        )


class EWGILayer(GILayer):
    """Edge-Wise GI layer: the edge ``i -> j`` carries ``w_out[i] * w_in[j]``.

    ``Z[:, l] = sum_k w_in[:, k, l] * Â^T (w_out[:, k, l] * X[:, k]) + B[:, l]``.
    """

    kind = "ewgi"
    param_names = ("W_out", "W_in", "B")

    def __init__(
        self,
        adj: AugmentedAdjacency,
        K: int,
        F: int,
        activation: Activation | str = Activation.LINEAR,
        *,
        W_out: np.ndarray | None = None,
        W_in: np.ndarray | None = None,
        B: np.ndarray | None = None,
    ) -> None:
        super().__init__(adj, K, F, activation, W=W_out, B=B)
        self.W_in = self._check("W_in", W_in, (self.n, K, F), np.ones)

    @property
    def W_out(self) -> np.ndarray:
        return self.W

    @W_out.setter
    def W_out(self, value: np.ndarray) -> None:
        self.W = value

    def _w_in(self) -> np.ndarray:
        return self.W_in

    def _backward(self, X: np.ndarray, dZ: np.ndarray):
        R = self.adj.apply(self.W_in[:, None, :, :] * dZ[:, :, None, :])
        g_out = np.einsum("nbk,nbkl->nkl", X, R)
        dX = np.einsum("nkl,nbkl->nbk", self.W_out, R)
        g_in = np.einsum("nbkl,nbl->nkl", self._sent(X), dZ)
        return {"W_out": g_out, "W_in": g_in}, dX


_LAYER_KINDS = {"gi": GILayer, "ewgi": EWGILayer}


def layer_from_dict(data: dict, adj: AugmentedAdjacency) -> GILayer:
    cls = _LAYER_KINDS[data["kind"]]
    n, K, F = int(data["n"]), int(data["K"]), int(data["F"])
    if n != adj.n:
        raise ValueError(f"layer built for n={n}, adjacency has n={adj.n}")
    shapes = {"B": (n, F)}
    params = {
        name: np.array(data["params"][name], dtype=np.float64).reshape(shapes.get(name, (n, K, F)))
        for name in cls.param_names
    }
    return cls(adj, K, F, data["activation"], **params)


def count_weights(layer: GILayer) -> int:
    return layer.n_params


def weight_count_formula(kind: str, n: int, K: int, F: int) -> int:
    if kind == "gi":
        return n * K * F + n * F
    if kind == "ewgi":
        return 2 * n * K * F + n * F
    raise ValueError(f"unknown layer kind {kind!r}")


def pool_forward(Y: np.ndarray, kind: PoolKind | str) -> np.ndarray:
    """Reduce ``(n, ..., F)`` over the feature axis to ``(n, ...)``."""
    kind = PoolKind(kind)
    F = Y.shape[-1]
    if kind is PoolKind.NONE:
        if F != 1:
            raise ValueError(f"pool 'none' needs F == 1, got F={F}")
        return Y[..., 0]
    if F == 1:
        raise ValueError(f"pool {kind.value!r} needs F > 1")
    if kind is PoolKind.REDUCE_MAX:
        return Y.max(axis=-1)
    return Y.mean(axis=-1)


def pool_backward(Y: np.ndarray, d_out: np.ndarray, kind: PoolKind | str) -> np.ndarray:
    kind = PoolKind(kind)
    F = Y.shape[-1]
    if kind is PoolKind.NONE:
        return d_out[..., None]
    if kind is PoolKind.REDUCE_MEAN:
        return np.repeat(d_out[..., None] / F, F, axis=-1)
    # argmax returns the lowest index among ties
    idx = np.argmax(Y, axis=-1)
    dY = np.zeros_like(Y)
    np.put_along_axis(dY, idx[..., None], d_out[..., None], axis=-1)
    return dY


def _check_mask(indices, n: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("mask indices must be a nonempty 1-D sequence")
    if np.any(idx < 0) or np.any(idx >= n):
        raise IndexError(f"mask index out of range for n={n}")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("mask indices must be strictly increasing")
    return idx


def mask_forward(P: np.ndarray, indices) -> np.ndarray:
    """Select node rows (axis 0) listed in ``indices``."""
    return P[_check_mask(indices, P.shape[0])]


def mask_backward(d_out: np.ndarray, indices, n: int) -> np.ndarray:
    idx = _check_mask(indices, n)
    d = np.zeros((n,) + d_out.shape[1:])
    d[idx] = d_out
    return d
