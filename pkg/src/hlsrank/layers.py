"""Dense layers over :mod:`hlsrank.numerics` tensors."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from hlsrank.errors import ConfigError
from hlsrank.numerics import ParameterStore, Tensor, matmul, relu, repeat_rows


def init_linear(
    store: ParameterStore, name: str, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True
) -> None:
    """Uniform fan-in initialisation ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    bound = 1.0 / np.sqrt(fan_in)
    store.add(f"{name}.W", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    if bias:
        store.add(f"{name}.b", rng.uniform(-bound, bound, size=(1, fan_out)))


def init_mlp(store: ParameterStore, name: str, dims: Sequence[int], rng: np.random.Generator) -> None:
    for k, (i, o) in enumerate(zip(dims[:-1], dims[1:])):
        init_linear(store, f"{name}.{k}", i, o, rng)


def linear(x: Tensor, store: ParameterStore, name: str) -> Tensor:
    W = store[f"{name}.W"]
    if x.shape[1] != W.shape[0]:
        raise ConfigError(f"{name}: input width {x.shape[1]} != expected {W.shape[0]}")
    return matmul(x, W) + repeat_rows(store[f"{name}.b"], x.shape[0])


def mlp(x: Tensor, store: ParameterStore, name: str, depth: int) -> Tensor:
    """``depth`` linear layers with relu between them (none after the last)."""
    for k in range(depth):
        x = linear(x, store, f"{name}.{k}")
        if k < depth - 1:
            x = relu(x)
    return x


def mlp_numpy(x: np.ndarray, store: ParameterStore, name: str, depth: int) -> np.ndarray:
    """Same as :func:`mlp` on raw arrays; the leading axes are batch axes."""
    for k in range(depth):
        x = x @ store[f"{name}.{k}.W"].data + store[f"{name}.{k}.b"].data[0]
        if k < depth - 1:
            x = np.where(x > 0.0, x, 0.0)
    return x
