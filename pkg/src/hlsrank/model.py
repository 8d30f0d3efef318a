"""The comparison model: encoder + node difference attention + both heads."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hlsrank import design as dm
from hlsrank.design import DesignGraph
from hlsrank.encoder import EncoderConfig, EncoderOutput, encode, init_encoder
from hlsrank.heads import PairLogits, PointPrediction, init_heads, pair_head, pair_head_numpy, point_head
from hlsrank.nda import NdaOutput, init_nda, nda_forward, nda_numpy
from hlsrank.numerics import ParameterStore, no_grad


@dataclass
class CompareModel:
    encoder_cfg: EncoderConfig
    params: ParameterStore
    feature_dim: int = dm.FEATURE_DIM

    @classmethod
    def create(cls, encoder_cfg: EncoderConfig | None = None, seed: int = 0,
               feature_dim: int = dm.FEATURE_DIM) -> CompareModel:
        cfg = encoder_cfg or EncoderConfig()
        rng = np.random.default_rng([seed, 0x1417])
        store = ParameterStore()
        init_encoder(store, cfg, feature_dim, rng)
        init_nda(store, cfg.hidden_dim, rng)
        init_heads(store, cfg.hidden_dim, rng)
        return cls(cfg, store, feature_dim)

    def encode(self, g: DesignGraph) -> EncoderOutput:
        return encode(g, self.encoder_cfg, self.params)

    def compare(self, enc_i: EncoderOutput, enc_j: EncoderOutput) -> tuple[PairLogits, NdaOutput]:
        nda = nda_forward(enc_i.H, enc_j.H, self.params)
        return pair_head(enc_i.h_G, enc_j.h_G, nda.h_diff, self.params), nda

    def point(self, enc: EncoderOutput) -> PointPrediction:
        return point_head(enc.h_G, self.params)

    # inference helpers -------------------------------------------------

    def embed(self, graphs: Sequence[DesignGraph]) -> list[EncoderOutput]:
        with no_grad():
            return [self.encode(g) for g in graphs]

    def predict(self, graphs: Sequence[DesignGraph]) -> np.ndarray:
        with no_grad():
            return np.array([self.point(self.encode(g)).value for g in graphs])

    def pair_probability(self, g_i: DesignGraph, g_j: DesignGraph) -> float:
        with no_grad():
            return self.compare(self.encode(g_i), self.encode(g_j))[0].p_first

    def pair_probability_batch(self, encs: Sequence[EncoderOutput], pairs: Sequence[tuple[int, int]]) -> np.ndarray:
        """``p^(1)`` for each ``(i, j)`` index pair into ``encs``, vectorised over pairs."""
        if not pairs:
            return np.zeros(0)
        H = np.stack([e.H.data for e in encs])
        hG = np.stack([e.h_G.data[0] for e in encs])
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        h_diff = nda_numpy(H[ii], H[jj], self.params)
        return pair_head_numpy(hG[ii], hG[jj], h_diff, self.params)
