"""Pairwise and pointwise decoders and the hybrid training loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hlsrank.errors import ConfigError
from hlsrank.layers import init_mlp, mlp, mlp_numpy
from hlsrank.numerics import (
    ParameterStore,
    Tensor,
    add,
    concat_cols,
    constant,
    hadamard,
    row_log_softmax,
    row_softmax,
    scale,
    sub,
    sum_all,
)

HEAD_DEPTH = 3  # two hidden relu layers of width d'
ALPHA_GRID = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class PairLogits:
    z: Tensor  # [1, 2]
    p: Tensor  # softmax(z); p[0] = P(design i outperforms design j)

    @property
    def p_first(self) -> float:
        return float(self.p.data[0, 0])


@dataclass(frozen=True)
class PointPrediction:
    z: Tensor  # [1, 1] predicted performance

    @property
    def value(self) -> float:
        return self.z.item()


def init_heads(store: ParameterStore, d: int, rng: np.random.Generator) -> None:
    init_mlp(store, "pair", (2 * d, d, d, 2), rng)
    init_mlp(store, "point", (d, d, d, 1), rng)


def _check_row(t: Tensor, width: int, what: str) -> None:
    if t.shape != (1, width):
        raise ConfigError(f"{what}: expected shape (1, {width}), got {t.shape}")


def pair_head(h_Gi: Tensor, h_Gj: Tensor, h_diff: Tensor, params: ParameterStore) -> PairLogits:
    d = params["pair.0.W"].shape[0] // 2
    for t, name in ((h_Gi, "h_Gi"), (h_Gj, "h_Gj"), (h_diff, "h_diff")):
        _check_row(t, d, name)
    z = mlp(concat_cols([hadamard(h_Gi, h_Gj), h_diff]), params, "pair", HEAD_DEPTH)
    return PairLogits(z, row_softmax(z))


def point_head(h_G: Tensor, params: ParameterStore) -> PointPrediction:
    _check_row(h_G, params["point.0.W"].shape[0], "h_G")
    return PointPrediction(mlp(h_G, params, "point", HEAD_DEPTH))


def pair_head_numpy(h_Gi: np.ndarray, h_Gj: np.ndarray, h_diff: np.ndarray, params: ParameterStore) -> np.ndarray:
    """Batched ``p^(1)`` for rows of ``[B, d']`` inputs."""
    z = mlp_numpy(np.concatenate([h_Gi * h_Gj, h_diff], axis=-1), params, "pair", HEAD_DEPTH)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e[:, 0] / e.sum(axis=-1)


def pair_label(y_i: float, y_j: float) -> int:
    """0 when design i is strictly better, else 1 (ties go to the second class)."""
    return 0 if y_i > y_j else 1


def pair_loss(logits: PairLogits, y_i: float, y_j: float) -> Tensor:
    """Cross-entropy of the pair logits against the ordering of ``y_i, y_j``."""
    onehot = np.zeros((1, 2))
    onehot[0, pair_label(y_i, y_j)] = 1.0
    return scale(sum_all(hadamard(row_log_softmax(logits.z), constant(onehot))), -1.0)


def _as_tensor(x) -> Tensor:
    if isinstance(x, PointPrediction):
        return x.z
    return x if isinstance(x, Tensor) else constant(x)


def point_loss(yhat_i, yhat_j, y_i: float, y_j: float) -> Tensor:
    ei = sub(_as_tensor(yhat_i), constant(y_i))
    ej = sub(_as_tensor(yhat_j), constant(y_j))
    return scale(add(hadamard(ei, ei), hadamard(ej, ej)), 0.5)


def hybrid_loss(point: Tensor, pair: Tensor, alpha: float) -> Tensor:
    if alpha < 0:
        raise ConfigError(f"alpha must be nonnegative, got {alpha}")
    return add(point, scale(pair, alpha))
