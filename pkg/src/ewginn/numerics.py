"""Activations, sparse products, initializers and a finite-difference oracle."""

from __future__ import annotations

from collections.abc import Callable
from enum import Enum

import numpy as np
from scipy.special import expit

from .graph import AugmentedAdjacency

__all__ = [
    "Activation",
    "apply_activation",
    "activation_derivative",
    "spmat_t_vec",
    "finite_difference_gradient",
    "glorot_uniform",
    "relative_error",
    "seeded_rng",
]


class Activation(str, Enum):
    ELU = "elu"
    SWISH = "swish"
    SOFTPLUS = "softplus"
    LINEAR = "linear"


def apply_activation(kind: Activation | str, x):
    kind = Activation(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind is Activation.LINEAR:
        return x.copy()
    if kind is Activation.ELU:
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if kind is Activation.SWISH:
        return x * expit(x)
    # x + log(1 + e^-x) for x > 0, log(1 + e^x) otherwise
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def activation_derivative(kind: Activation | str, x):
    kind = Activation(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind is Activation.LINEAR:
        return np.ones_like(x)
    if kind is Activation.ELU:
        return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))
    if kind is Activation.SWISH:
        s = expit(x)
        return s + x * s * (1.0 - s)
    return expit(x)


def spmat_t_vec(adj: AugmentedAdjacency, x) -> np.ndarray:
    """``Â^T x`` by sparse traversal."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (adj.n,):
        raise ValueError(f"vector of length {adj.n} expected, got shape {x.shape}")
    return adj.t_apply(x)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], theta, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    if h <= 0:
        raise ValueError("step must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    flat = theta.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(theta)
        flat[i] = orig - h
        fm = f(theta)
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def glorot_uniform(
    fan_in: int, fan_out: int, shape, seed: int | np.random.Generator
) -> np.ndarray:
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fans must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def relative_error(a, b, floor: float = 1e-6) -> np.ndarray:
    """Coordinate-wise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def seeded_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(stream)))
