"""Node difference attention over a same-kernel design pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hlsrank.errors import ContractError
from hlsrank.layers import init_mlp, mlp, mlp_numpy
from hlsrank.numerics import ParameterStore, Tensor, concat_cols, matmul, row_softmax, sub, transpose

ATTENTION_DEPTH = 3  # two hidden layers of width d', scalar output


@dataclass(frozen=True)
class NdaOutput:
    D: Tensor  # [n, d'] node differences H_i - H_j
    s: Tensor  # [n, 1] raw scores
    a: Tensor  # [1, n] softmax over nodes
    h_diff: Tensor  # [1, d']


def init_nda(store: ParameterStore, d: int, rng: np.random.Generator) -> None:
    init_mlp(store, "nda", (3 * d, d, d, 1), rng)


def node_diff(H_i: Tensor, H_j: Tensor) -> Tensor:
    if H_i.shape != H_j.shape:
        raise ContractError(
            f"node embeddings of shapes {H_i.shape} and {H_j.shape} cannot be paired; "
            "only designs of one kernel are comparable"
        )
    return sub(H_i, H_j)


def nda_forward(H_i: Tensor, H_j: Tensor, params: ParameterStore) -> NdaOutput:
    D = node_diff(H_i, H_j)
    s = mlp(concat_cols([H_i, H_j, D]), params, "nda", ATTENTION_DEPTH)
    a = row_softmax(transpose(s))
    return NdaOutput(D, s, a, matmul(a, D))


def nda_numpy(H_i: np.ndarray, H_j: np.ndarray, params: ParameterStore) -> np.ndarray:
    """Batched ``h_diff`` for stacks ``[B, n, d']``; returns ``[B, d']``."""
    D = H_i - H_j
    s = mlp_numpy(np.concatenate([H_i, H_j, D], axis=-1), params, "nda", ATTENTION_DEPTH)[..., 0]
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    a = e / e.sum(axis=-1, keepdims=True)
    return np.einsum("bn,bnd->bd", a, D)
