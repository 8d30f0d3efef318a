"""Two-stage design space exploration.

Stage 1 ranks candidate configurations by predicted performance and keeps
the top ``k1``. Stage 2 scores every pair of those with the comparison head
and repeatedly eliminates the candidate with the fewest summed win
probabilities until ``k2`` remain.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from hlsrank import design as dm
from hlsrank.design import KernelTemplate, PragmaConfig
from hlsrank.errors import ContractError, SchemaError
from hlsrank.model import CompareModel
from hlsrank.numerics import no_grad

DEFAULT_K1 = 100
DEFAULT_K2 = 10
DEFAULT_BATCH = 512


class Comparator(Protocol):
    def compare_batch(self, pairs: Sequence[tuple[int, int]]) -> np.ndarray: ...

    def compare(self, i: int, j: int) -> float: ...


class ModelComparator:
    """Pair-head probabilities over a fixed list of designs."""

    def __init__(self, model: CompareModel, graphs: Sequence[dm.DesignGraph]):
        self.model = model
        self.graphs = list(graphs)
        self.encodings = model.embed(self.graphs)
        self.calls = 0

    def compare_batch(self, pairs):
        self.calls += len(pairs)
        return self.model.pair_probability_batch(self.encodings, pairs)

    def compare(self, i, j):
        self.calls += 1
        with no_grad():
            logits, _ = self.model.compare(self.encodings[i], self.encodings[j])
        return logits.p_first


class ConstantComparator:
    def __init__(self, value: float = 0.5):
        self.value = value
        self.calls = 0

    def compare_batch(self, pairs):
        self.calls += len(pairs)
        return np.full(len(pairs), self.value)

    def compare(self, i, j):
        self.calls += 1
        return self.value


@dataclass
class ScoreMatrix:
    """``values[i, j]`` for ``i < j`` is P(design i beats design j); other cells stay 0."""

    values: np.ndarray
    calls: int

    @property
    def size(self) -> int:
        return self.values.shape[0]


def upper_pairs(k: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(k) for j in range(i + 1, k)]


def score_matrix(comparator: Comparator, k1: int, batch: int | None = DEFAULT_BATCH) -> ScoreMatrix:
    """Evaluate all ``k1 * (k1 - 1) / 2`` pairs, ``batch`` at a time (``None``: one by one)."""
    if k1 < 2:
        raise ContractError(f"score matrix needs at least 2 designs, got {k1}")
    values = np.zeros((k1, k1))
    pairs = upper_pairs(k1)
    if batch is None:
        for i, j in pairs:
            values[i, j] = comparator.compare(i, j)
    else:
        if batch < 1:
            raise ContractError("batch size must be positive")
        for start in range(0, len(pairs), batch):
            chunk = pairs[start : start + batch]
            probs = comparator.compare_batch(chunk)
            for (i, j), p in zip(chunk, probs):
                values[i, j] = p
    return ScoreMatrix(values, len(pairs))


@dataclass(frozen=True)
class EliminationRound:
    remain: tuple[int, ...]
    points: tuple[float, ...]
    eliminated: int


def round_points(scores: np.ndarray, remain: Sequence[int]) -> list[float]:
    pts = [0.0] * len(remain)
    for a in range(len(remain)):
        for b in range(a + 1, len(remain)):
            s = scores[remain[a], remain[b]]
            pts[a] += s
            pts[b] += 1.0 - s
    return pts


def rcv_eliminate(scores: ScoreMatrix | np.ndarray, k2: int, keys: Sequence | None = None
                  ) -> tuple[list[int], list[EliminationRound]]:
    """Ranked-choice elimination down to ``k2`` survivors.

    Returns surviving indices (ascending) and the per-round trace. Exactly one
    design leaves per round; among designs tied at the minimum, the one with
    the largest ``keys`` entry (default: index) goes.
    """
    values = scores.values if isinstance(scores, ScoreMatrix) else np.asarray(scores)
    n = values.shape[0]
    if not 1 <= k2 <= n:
        raise ContractError(f"k2 must lie in [1, {n}], got {k2}")
    keys = list(range(n)) if keys is None else list(keys)
    remain = list(range(n))
    trace = []
    while len(remain) > k2:
        pts = round_points(values, remain)
        low = min(pts)
        tied = [d for d, p in zip(remain, pts) if p == low]
        out = max(tied, key=lambda d: keys[d])
        trace.append(EliminationRound(tuple(remain), tuple(pts), out))
        remain.remove(out)
    return remain, trace


# ---------------------------------------------------------------------------
# stage 1 and the full pipeline


@dataclass(frozen=True)
class Ranked:
    config: PragmaConfig
    y_hat: float


def stage1_prune(template: KernelTemplate, candidates: Sequence[PragmaConfig], model: CompareModel, k1: int
                 ) -> tuple[list[Ranked], list[Ranked]]:
    """Returns (top ``k1``, full ranking); descending predicted performance, ties by config order."""
    if not candidates:
        raise ContractError("stage 1 needs at least one candidate")
    space = template.pragma_space
    graphs = [dm.instantiate(template, c) for c in candidates]
    preds = model.predict(graphs)
    ranking = sorted(
        (Ranked(c, float(p)) for c, p in zip(candidates, preds)), key=lambda r: (-r.y_hat, space.key(r.config))
    )
    return ranking[:k1], ranking


def candidate_pool(template: KernelTemplate, budget: int | None, seed: int) -> list[PragmaConfig]:
    """All valid configs, or a seeded uniform sample of ``budget`` of them (config order)."""
    space = dm.enumerate_valid(template.pragma_space)
    if budget is None or len(space) <= budget:
        return space
    idx = np.sort(np.random.default_rng([seed, 0xD5E]).choice(len(space), size=budget, replace=False))
    return [space[i] for i in idx]


@dataclass
class DseResult:
    kernel_id: str
    mode: str  # "two-stage" | "stage1-only"
    k1: int
    k2: int
    survivors: list[PragmaConfig]
    stage1_ranking: list[Ranked]
    elimination_trace: list[EliminationRound] = field(default_factory=list)
    comparator_calls: int = 0

    @property
    def is_ablation(self) -> bool:
        return self.mode == "stage1-only"

    def to_json(self) -> dict:
        return {
            "schema_version": dm.SCHEMA_VERSION,
            "kernel": self.kernel_id,
            "mode": self.mode,
            "ablation_baseline": self.is_ablation,
            "k1": self.k1,
            "k2": self.k2,
            "survivors": [c.as_dict() for c in self.survivors],
            "stage1_ranking": [{"config": r.config.as_dict(), "y_hat": r.y_hat} for r in self.stage1_ranking],
            "elimination_trace": [
                {"remain": list(t.remain), "points": list(t.points), "eliminated": t.eliminated}
                for t in self.elimination_trace
            ],
            "comparator_calls": self.comparator_calls,
        }

    @classmethod
    def from_json(cls, d: dict) -> DseResult:
        dm.check_schema(d)
        try:
            return cls(
                d["kernel"], d["mode"], int(d["k1"]), int(d["k2"]),
                [PragmaConfig.of(c) for c in d["survivors"]],
                [Ranked(PragmaConfig.of(r["config"]), float(r["y_hat"])) for r in d["stage1_ranking"]],
                [EliminationRound(tuple(t["remain"]), tuple(t["points"]), int(t["eliminated"]))
                 for t in d["elimination_trace"]],
                int(d["comparator_calls"]),
            )
        except KeyError as exc:
            raise SchemaError(f"DSE result missing {exc}") from exc

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dm.dumps(self.to_json()) + "\n")
        return path

    @classmethod
    def load(cls, path: Path) -> DseResult:
        return cls.from_json(json.loads(Path(path).read_text()))


def explore(template: KernelTemplate, model: CompareModel, k1: int = DEFAULT_K1, k2: int = DEFAULT_K2,
            budget: int | None = None, batch: int | None = DEFAULT_BATCH, seed: int = 0,
            stage1_only: bool = False) -> DseResult:
    if k2 < 1 or k1 < k2:
        raise ContractError(f"need 1 <= k2 <= k1, got k1={k1}, k2={k2}")
    pool = candidate_pool(template, budget, seed)
    mode = "stage1-only" if stage1_only else "two-stage"
    if len(pool) <= k2:
        if len(pool) < k2:
            warnings.warn(f"{template.kernel_id}: valid space ({len(pool)}) smaller than k2={k2}", stacklevel=2)
        _, ranking = stage1_prune(template, pool, model, len(pool))
        return DseResult(template.kernel_id, mode, len(pool), len(pool), [r.config for r in ranking], ranking)
    top, ranking = stage1_prune(template, pool, model, k1)
    if stage1_only:
        return DseResult(template.kernel_id, mode, len(top), k2, [r.config for r in top[:k2]], ranking)
    comparator = ModelComparator(model, [dm.instantiate(template, r.config) for r in top])
    scores = score_matrix(comparator, len(top), batch)
    keys = [template.pragma_space.key(r.config) for r in top]
    kept, trace = rcv_eliminate(scores, k2, keys)
    return DseResult(
        template.kernel_id, mode, len(top), k2, [top[i].config for i in kept], ranking, trace, scores.calls
    )


def random_baseline(template: KernelTemplate, k2: int, budget: int | None, seed: int) -> list[PragmaConfig]:
    pool = candidate_pool(template, budget, seed)
    if len(pool) <= k2:
        return pool
    idx = np.sort(np.random.default_rng([seed, 0xBA5E]).choice(len(pool), size=k2, replace=False))
    return [pool[i] for i in idx]
