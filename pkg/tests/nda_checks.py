"""Invariant measurements for node difference attention, shared with the acceptance suite."""

from __future__ import annotations

import numpy as np

from hlsrank.nda import nda_forward, node_diff
from hlsrank.numerics import constant, no_grad


def nda_violations(params, H_i: np.ndarray, H_j: np.ndarray, rng) -> dict[str, float]:
    """Largest deviation for each invariant on one pair (0 means exact)."""
    with no_grad():
        out = nda_forward(constant(H_i), constant(H_j), params)
        same = nda_forward(constant(H_i), constant(H_i), params)
        perm = rng.permutation(H_i.shape[0])
        permuted = nda_forward(constant(H_i[perm]), constant(H_j[perm]), params)
        d_ij = node_diff(constant(H_i), constant(H_j)).data
        d_ji = node_diff(constant(H_j), constant(H_i)).data
    return {
        "attention_sum": abs(out.a.data.sum() - 1.0),
        "identical_pair": float(np.max(np.abs(same.h_diff.data))),
        "permutation": float(np.max(np.abs(permuted.h_diff.data - out.h_diff.data))),
        "antisymmetry": float(np.max(np.abs(d_ij + d_ji))),
    }
