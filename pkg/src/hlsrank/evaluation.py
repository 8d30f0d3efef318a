"""Ranking metrics and report artifacts (CSV tables plus a JSON mirror)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from hlsrank import design as dm
from hlsrank import dse as dse_mod
from hlsrank.errors import ContractError
from hlsrank.model import CompareModel
from hlsrank.surrogate import Dataset, Record, SurrogateOracle, latency

BUCKETS = ("d1", "d2", "d3", "ALL")

# (records of one kernel, index pairs) -> P(first beats second) per pair
PairScorer = Callable[[Sequence[Record], Sequence[tuple[int, int]]], np.ndarray]


def rmse(y_hat: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(y_hat, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"rmse needs equal lengths, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ContractError("rmse of an empty sample is undefined")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class TauCounts:
    concordant: int
    discordant: int
    tied_x: int  # pairs tied in x (including those also tied in y)
    tied_y: int
    n_pairs: int


def tau_counts(x: Sequence[float], y: Sequence[float]) -> TauCounts:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError(f"kendall_tau needs two equal-length 1-D sequences, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ContractError(f"kendall_tau needs at least 2 items, got {n}")
    iu = np.triu_indices(n, k=1)
    sx = np.sign(a[:, None] - a[None, :])[iu]
    sy = np.sign(b[:, None] - b[None, :])[iu]
    prod = sx * sy
    return TauCounts(
        int(np.sum(prod > 0)), int(np.sum(prod < 0)), int(np.sum(sx == 0)), int(np.sum(sy == 0)), n * (n - 1) // 2
    )


def tau_from_counts(c: TauCounts) -> float:
    """tau-b; nan when either sequence is constant."""
    denom = (c.n_pairs - c.tied_x) * (c.n_pairs - c.tied_y)
    if denom == 0:
        return math.nan
    return (c.concordant - c.discordant) / math.sqrt(denom)


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    return tau_from_counts(tau_counts(x, y))


# ---------------------------------------------------------------------------
# pairwise accuracy


@dataclass(frozen=True)
class BucketAccuracy:
    correct: int
    count: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.count if self.count else math.nan


def bucket_of(degree: int) -> str | None:
    return f"d{degree}" if 1 <= degree <= 3 else None


def all_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def model_scorer(model: CompareModel) -> PairScorer:
    def score(records, pairs):
        return model.pair_probability_batch(model.embed([r.graph for r in records]), pairs)

    return score


def oracle_scorer(records, pairs) -> np.ndarray:
    """Stub that always agrees with the true ordering."""
    return np.array([1.0 if records[i].y > records[j].y else 0.0 for i, j in pairs])


def pairwise_accuracy(scorer: PairScorer | CompareModel, by_kernel: Mapping[str, Sequence[Record]]
                      ) -> dict[str, BucketAccuracy]:
    """Accuracy over all same-kernel unordered pairs, bucketed by difference degree.

    A pair is correct iff ``p > 0.5`` agrees with ``y_i > y_j``; so ``p = 0.5``
    predicts the second class. Degree-0 pairs (duplicate configs) count in ALL only.
    """
    if isinstance(scorer, CompareModel):
        scorer = model_scorer(scorer)
    tally = {b: [0, 0] for b in BUCKETS}
    for _, recs in sorted(by_kernel.items()):
        pairs = all_pairs(len(recs))
        if not pairs:
            continue
        probs = np.asarray(scorer(recs, pairs))
        for (i, j), p in zip(pairs, probs):
            ok = int((p > 0.5) == (recs[i].y > recs[j].y))
            for b in ("ALL", bucket_of(dm.pragma_difference_degree(recs[i].graph, recs[j].graph))):
                if b is not None:
                    tally[b][0] += ok
                    tally[b][1] += 1
    return {b: BucketAccuracy(*tally[b]) for b in BUCKETS}


# ---------------------------------------------------------------------------
# report


@dataclass
class DseLatency:
    kernel_id: str
    two_stage: float
    stage1_only: float
    random: float


def best_true_latency(oracle: SurrogateOracle, configs: Sequence[dm.PragmaConfig]) -> float:
    if not configs:
        raise ContractError("no survivors to evaluate")
    return min(latency(oracle, c) for c in configs)


def dse_comparison(template: dm.KernelTemplate, oracle: SurrogateOracle, model: CompareModel, k1: int, k2: int,
                   budget: int | None, batch: int | None, seed: int
                   ) -> tuple[DseLatency, dse_mod.DseResult, dse_mod.DseResult]:
    """Best true latency among survivors of two-stage, stage-1-only and random selection."""
    two = dse_mod.explore(template, model, k1, k2, budget, batch, seed)
    s1 = dse_mod.explore(template, model, k1, k2, budget, batch, seed, stage1_only=True)
    rnd = dse_mod.random_baseline(template, k2, budget, seed)
    row = DseLatency(template.kernel_id, best_true_latency(oracle, two.survivors),
                     best_true_latency(oracle, s1.survivors), best_true_latency(oracle, rnd))
    return row, two, s1


def geomean(xs: Sequence[float]) -> float:
    return float(np.exp(np.mean(np.log(np.asarray(xs, dtype=np.float64)))))


@dataclass
class EvalReport:
    seed: int
    checkpoint: str  # sha256 of the checkpoint file contents
    rmse: float
    acc: dict[str, BucketAccuracy]
    tau_pooled: float
    tau_per_kernel: dict[str, float]
    dse: list[DseLatency] = field(default_factory=list)

    @property
    def tau_kernel_mean(self) -> float:
        vals = [t for t in self.tau_per_kernel.values() if not math.isnan(t)]
        return float(np.mean(vals)) if vals else math.nan

    def dse_summary(self) -> dict[str, float]:
        if not self.dse:
            return {}
        two = geomean([r.two_stage for r in self.dse])
        s1 = geomean([r.stage1_only for r in self.dse])
        rnd = geomean([r.random for r in self.dse])
        return {
            "geomean_two_stage": two,
            "geomean_stage1_only": s1,
            "geomean_random": rnd,
            "ratio_vs_random": two / rnd,
            "ratio_vs_stage1_only": two / s1,
        }

    def to_json(self) -> dict:
        return {
            "schema_version": dm.SCHEMA_VERSION,
            "seed": self.seed,
            "checkpoint_sha256": self.checkpoint,
            "rmse": self.rmse,
            "acc": {b: {"accuracy": _j(a.accuracy), "count": a.count} for b, a in self.acc.items()},
            "kendall_tau": {
                "pooled": _j(self.tau_pooled),
                "kernel_mean": _j(self.tau_kernel_mean),
                "per_kernel": {k: _j(t) for k, t in self.tau_per_kernel.items()},
            },
            "dse_latency": [
                {"kernel": r.kernel_id, "two_stage": r.two_stage, "stage1_only": r.stage1_only, "random": r.random}
                for r in self.dse
            ],
            "dse_summary": self.dse_summary(),
        }


def _j(x: float):
    """JSON has no nan; emit null."""
    return None if isinstance(x, float) and math.isnan(x) else x


def evaluate(model: CompareModel, dataset: Dataset, seed: int, checkpoint_hash: str, split: str = "test",
             dse: Sequence[DseLatency] = ()) -> EvalReport:
    by_kernel = {k: v for k, v in dataset.by_kernel(split).items() if v}
    if not by_kernel:
        raise ContractError(f"split {split!r} is empty")
    recs = [r for k in sorted(by_kernel) for r in by_kernel[k]]
    preds = dict(zip(map(id, recs), model.predict([r.graph for r in recs])))
    y_hat = [preds[id(r)] for r in recs]
    y = [r.y for r in recs]
    per_kernel = {}
    for k in sorted(by_kernel):
        rs = by_kernel[k]
        per_kernel[k] = kendall_tau([preds[id(r)] for r in rs], [r.y for r in rs]) if len(rs) >= 2 else math.nan
    return EvalReport(
        seed, checkpoint_hash, rmse(y_hat, y), pairwise_accuracy(model, by_kernel),
        kendall_tau(y_hat, y) if len(recs) >= 2 else math.nan, per_kernel, list(dse),
    )


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def metric_rows(rep: EvalReport) -> list[list]:
    rows = [["rmse", "pooled", rep.rmse, "", rep.seed, rep.checkpoint]]
    for b in BUCKETS:
        a = rep.acc[b]
        rows.append(["pairwise_accuracy", b, a.accuracy, a.count, rep.seed, rep.checkpoint])
    rows.append(["kendall_tau", "pooled", rep.tau_pooled, "", rep.seed, rep.checkpoint])
    rows.append(["kendall_tau", "kernel_mean", rep.tau_kernel_mean, "", rep.seed, rep.checkpoint])
    for k, t in rep.tau_per_kernel.items():
        rows.append(["kendall_tau", k, t, "", rep.seed, rep.checkpoint])
    return rows


def write_report(rep: EvalReport, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [_write_csv(out_dir / "metrics.csv", ["metric", "scope", "value", "count", "seed", "checkpoint_sha256"],
                        metric_rows(rep))]
    if rep.dse:
        rows = [
            [r.kernel_id, r.two_stage, r.stage1_only, r.random, r.two_stage / r.random, r.two_stage / r.stage1_only,
             rep.seed, rep.checkpoint]
            for r in rep.dse
        ]
        s = rep.dse_summary()
        rows.append(["GEOMEAN", s["geomean_two_stage"], s["geomean_stage1_only"], s["geomean_random"],
                     s["ratio_vs_random"], s["ratio_vs_stage1_only"], rep.seed, rep.checkpoint])
        paths.append(_write_csv(
            out_dir / "dse_latency.csv",
            ["kernel", "two_stage", "stage1_only", "random", "ratio_vs_random", "ratio_vs_stage1_only",
             "seed", "checkpoint_sha256"],
            rows,
        ))
    jpath = out_dir / "report.json"
    jpath.write_text(dm.dumps(rep.to_json()) + "\n")
    paths.append(jpath)
    return paths


@dataclass(frozen=True)
class AlphaRow:
    alpha: float
    final_total: float
    final_point: float
    final_pair: float
    best_val: float
    acc_all: float
    tau_pooled: float
    rmse: float
    seed: int
    checkpoint: str


ALPHA_HEADER = ("alpha", "final_total", "final_point", "final_pair", "best_val", "acc_all", "tau_pooled", "rmse",
                "seed", "checkpoint_sha256")


def write_alpha_sweep(rows: Sequence[AlphaRow], path: Path) -> Path:
    return _write_csv(Path(path), ALPHA_HEADER,
                      [[getattr(r, f) for f in AlphaRow.__dataclass_fields__] for r in rows])
