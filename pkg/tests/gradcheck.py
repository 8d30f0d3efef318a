"""Random compositions of differentiable primitives for gradient checks."""

from __future__ import annotations

import numpy as np

from hlsrank import numerics as nx


def _const(rng, shape):
    return nx.constant(rng.normal(size=shape))


# Each entry maps (x, rng) -> tensor; shapes stay <= 8 in each extent.
UNARY = {
    "matmul_right": lambda x, r: nx.matmul(x, _const(r, (x.shape[1], int(r.integers(1, 5))))),
    "matmul_left": lambda x, r: nx.matmul(_const(r, (int(r.integers(1, 5)), x.shape[0])), x),
    "transpose": lambda x, r: nx.transpose(x),
    "add": lambda x, r: nx.add(x, _const(r, x.shape)),
    "sub": lambda x, r: nx.sub(_const(r, x.shape), x),
    "hadamard": lambda x, r: nx.hadamard(x, _const(r, x.shape)),
    "square": lambda x, r: nx.hadamard(x, x),
    "relu": lambda x, r: nx.relu(x),
    "scale": lambda x, r: nx.scale(x, float(r.normal())),
    "sum_rows": lambda x, r: nx.sum_rows(x),
    "row_softmax": lambda x, r: nx.row_softmax(x),
    "row_log_softmax": lambda x, r: nx.row_log_softmax(x),
    "concat_cols": lambda x, r: nx.concat_cols([x, _const(r, (x.shape[0], int(r.integers(1, 3))))])
    if x.shape[1] <= 6 else x,
    "repeat_rows": lambda x, r: nx.repeat_rows(nx.sum_rows(x), int(r.integers(1, 4))),
}

SCALAR = {
    "sum_all": lambda x, r: nx.sum_all(x),
    "mean_all": lambda x, r: nx.mean_all(x),
    "weighted_sum": lambda x, r: nx.sum_all(nx.hadamard(x, _const(r, x.shape))),
}


def composition(seed: int, depth: int, final: str = "weighted_sum"):
    """A fixed random scalar function of one tensor, plus its input point."""
    rng = np.random.default_rng(seed)
    names = list(UNARY)
    picks = [names[i] for i in rng.integers(0, len(names), size=depth)]
    shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
    at = rng.normal(size=shape)
    op_seeds = rng.integers(0, 2**31, size=depth + 1)

    def f(x):
        t = x
        for name, s in zip(picks, op_seeds):
            t = UNARY[name](t, np.random.default_rng(int(s)))
        return SCALAR[final](t, np.random.default_rng(int(op_seeds[-1])))

    return f, at, picks
