"""Pair sampling, AdamW optimisation with a cosine schedule, model selection."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from hlsrank import design as dm
from hlsrank.encoder import EncoderConfig, EncoderOutput
from hlsrank.errors import ConfigError, ContractError, NumericalError, SchemaError
from hlsrank.heads import hybrid_loss, pair_loss, point_loss
from hlsrank.model import CompareModel
from hlsrank.numerics import ParameterStore, Tensor, add, backward, no_grad, scale
from hlsrank.surrogate import Dataset, Record

log = logging.getLogger(__name__)

TRAIN_MODES = ("hybrid", "pointwise")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    alpha: float = 1.0
    schedule: str = "cosine"
    seed: int = 0
    pairs_per_kernel_per_epoch: int = 64
    val_pairs_per_kernel: int = 64
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    mode: str = "hybrid"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.pairs_per_kernel_per_epoch < 1:
            raise ConfigError("epochs, batch_size and pairs_per_kernel_per_epoch must be positive")
        if self.lr < 0 or self.alpha < 0 or self.weight_decay < 0:
            raise ConfigError("lr, alpha and weight_decay must be nonnegative")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"mode must be one of {TRAIN_MODES}")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))

    @classmethod
    def full_scale(cls, **kw) -> TrainConfig:
        return cls(epochs=1600, batch_size=128, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys {sorted(unknown)}")
        return cls(**d)


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if not 0 <= step <= total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr0
    return lr0 * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


# ---------------------------------------------------------------------------
# pairs


def _decode_pair(k: int, n: int) -> tuple[int, int]:
    """Inverse of the row-major enumeration of ``{(i, j): i < j < n}``."""
    i = 0
    while k >= n - 1 - i:
        k -= n - 1 - i
        i += 1
    return i, i + 1 + k


def sample_pairs(dataset: Dataset, split: str = "train", budget: int = 64, seed: int = 0) -> list[tuple[Record, Record]]:
    """Up to ``budget`` distinct unordered same-kernel pairs per kernel.

    Each pair is oriented at random, and the combined list is shuffled.
    Kernels with fewer than two records in ``split`` are skipped.
    """
    if budget <= 0:
        raise ContractError("pair budget must be positive")
    rng = np.random.default_rng([seed, 0xA1])
    out = []
    for kid, recs in dataset.by_kernel(split).items():
        n = len(recs)
        if n < 2:
            warnings.warn(f"kernel {kid}: fewer than 2 {split} records, no pairs drawn", stacklevel=2)
            continue
        total = n * (n - 1) // 2
        picks = rng.choice(total, size=min(budget, total), replace=False)
        flips = rng.random(len(picks)) < 0.5
        for k, flip in zip(picks.tolist(), flips.tolist()):
            i, j = _decode_pair(k, n)
            out.append((recs[j], recs[i]) if flip else (recs[i], recs[j]))
    order = rng.permutation(len(out))
    return [out[k] for k in order]


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class AdamW:
    params: ParameterStore
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, lr: float) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for p in self.params:
            g = p.tensor.grad
            if not p.trainable or g is None:
                continue
            m = self.m.get(p.name)
            if m is None:
                m = self.m[p.name] = np.zeros_like(g)
                self.v[p.name] = np.zeros_like(g)
            v = self.v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            data = p.tensor.data
            data -= lr * self.weight_decay * data
            data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------------------
# loss over a batch


@dataclass
class BatchLoss:
    total: Tensor
    point_sum: float
    pair_sum: float
    total_sum: float
    count: int


def batch_loss(model: CompareModel, pairs: Sequence[tuple[Record, Record]], alpha: float,
               mode: str = "hybrid") -> BatchLoss:
    """Mean hybrid loss over ``pairs``; each distinct design is encoded once."""
    encs: dict[int, EncoderOutput] = {}
    preds = {}

    def enc(r: Record):
        key = id(r)
        if key not in encs:
            encs[key] = model.encode(r.graph)
            preds[key] = model.point(encs[key])
        return encs[key], preds[key]

    acc = None
    point_sum = pair_sum = total_sum = 0.0
    for ri, rj in pairs:
        ei, zi = enc(ri)
        ej, zj = enc(rj)
        lp = point_loss(zi, zj, ri.y, rj.y)
        if mode == "hybrid":
            logits, _ = model.compare(ei, ej)
            lc = pair_loss(logits, ri.y, rj.y)
            lk = hybrid_loss(lp, lc, alpha)
            pair_sum += lc.item()
        else:
            lk = lp
        point_sum += lp.item()
        total_sum += lk.item()
        acc = lk if acc is None else add(acc, lk)
    return BatchLoss(scale(acc, 1.0 / len(pairs)), point_sum, pair_sum, total_sum, len(pairs))


def _check_finite(bl: BatchLoss, batch_id) -> None:
    if not all(math.isfinite(x) for x in (bl.total_sum, bl.point_sum, bl.pair_sum)):
        raise NumericalError(
            f"non-finite loss in batch {batch_id}: total={bl.total_sum} point={bl.point_sum} pair={bl.pair_sum}"
        )


def batches(pairs: Sequence, size: int) -> list[Sequence]:
    return [pairs[k : k + size] for k in range(0, len(pairs), size)]


def train_epoch(model: CompareModel, batch_iter: Iterable[Sequence[tuple[Record, Record]]], opt: AdamW,
                alpha: float, lr_for_step: Callable[[int], float], mode: str = "hybrid") -> tuple[float, float, float]:
    """One pass with an update per batch; returns pair-mean (total, point, pair) losses."""
    n = 0
    tot = pt = pr = 0.0
    for b, pairs in enumerate(batch_iter):
        model.params.zero_grad()
        bl = batch_loss(model, pairs, alpha, mode)
        _check_finite(bl, b)
        backward(bl.total)
        opt.step(lr_for_step(opt.step_count))
        n += bl.count
        tot += bl.total_sum
        pt += bl.point_sum
        pr += bl.pair_sum
    model.params.zero_grad()
    return tot / n, pt / n, pr / n


def evaluate_loss(model: CompareModel, pairs: Sequence[tuple[Record, Record]], alpha: float,
                  mode: str = "hybrid") -> tuple[float, float, float]:
    with no_grad():
        bl = batch_loss(model, pairs, alpha, mode)
    n = bl.count
    return bl.total_sum / n, bl.point_sum / n, bl.pair_sum / n


# ---------------------------------------------------------------------------
# checkpoints


CHECKPOINT_SCHEMA = 1


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    total: float
    point: float
    pair: float
    val: float


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    encoder_cfg: EncoderConfig
    train_cfg: TrainConfig
    best_val_loss: float
    epoch: int
    history: list[EpochLog] = field(default_factory=list)
    feature_dim: int = dm.FEATURE_DIM

    def model(self) -> CompareModel:
        m = CompareModel.create(self.encoder_cfg, feature_dim=self.feature_dim)
        m.params.load_state(self.params)
        return m

    def to_json(self) -> dict:
        return {
            "schema_version": CHECKPOINT_SCHEMA,
            "encoder_config": {**asdict(self.encoder_cfg), "pragma_mlp_dims": list(self.encoder_cfg.pragma_mlp_dims)},
            "train_config": {**asdict(self.train_cfg), "betas": list(self.train_cfg.betas)},
            "feature_dim": self.feature_dim,
            "best_val_loss": self.best_val_loss,
            "epoch": self.epoch,
            "history": [asdict(h) for h in self.history],
            "params": [
                {"name": n, "shape": list(a.shape), "values": a.ravel().tolist()} for n, a in self.params.items()
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> Checkpoint:
        if d.get("schema_version") != CHECKPOINT_SCHEMA:
            raise SchemaError(f"checkpoint schema_version {d.get('schema_version')!r} unsupported")
        try:
            params = {
                p["name"]: np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in d["params"]
            }
            enc = d["encoder_config"]
            return cls(
                params,
                EncoderConfig(**{**enc, "pragma_mlp_dims": tuple(enc["pragma_mlp_dims"])}),
                TrainConfig.from_dict({**d["train_config"], "betas": tuple(d["train_config"]["betas"])}),
                float(d["best_val_loss"]),
                int(d["epoch"]),
                [EpochLog(**h) for h in d["history"]],
                int(d["feature_dim"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed checkpoint: {exc}") from exc

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dm.dumps(self.to_json()) + "\n")
        return path

    @classmethod
    def load(cls, path: Path) -> Checkpoint:
        return cls.from_json(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        return hashlib.sha256((dm.dumps(self.to_json()) + "\n").encode()).hexdigest()


def write_loss_curve(history: Sequence[EpochLog], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "total", "point", "pair"])
        for h in history:
            w.writerow([h.epoch, repr(h.total), repr(h.point), repr(h.pair)])
    return path


# ---------------------------------------------------------------------------
# fitting


def fit(dataset: Dataset, cfg: TrainConfig, encoder_cfg: EncoderConfig | None = None,
        model: CompareModel | None = None, freeze: Sequence[str] = ()) -> Checkpoint:
    """Train and return the checkpoint with the lowest validation loss.

    Only the train split is read for gradients. Validation pairs are drawn
    once per run. ``freeze`` lists parameter-name prefixes excluded from updates.
    """
    if not dataset.split("train") or not dataset.split("val"):
        raise ContractError("fit needs non-empty train and val splits")
    model = model or CompareModel.create(encoder_cfg, seed=cfg.seed)
    for prefix in freeze:
        model.params.set_trainable(prefix, False)
    opt = AdamW(model.params, cfg.betas, cfg.eps, cfg.weight_decay)
    val_pairs = sample_pairs(dataset, "val", cfg.val_pairs_per_kernel, seed=cfg.seed + 7919)

    n_batches = None
    history: list[EpochLog] = []
    best = (math.inf, 0, model.params.state())
    for epoch in range(1, cfg.epochs + 1):
        pairs = sample_pairs(dataset, "train", cfg.pairs_per_kernel_per_epoch, seed=cfg.seed * 100_003 + epoch)
        bs = batches(pairs, cfg.batch_size)
        if n_batches is None:
            n_batches = len(bs)
            total_steps = n_batches * cfg.epochs
        if cfg.schedule == "cosine":
            lr_fn = lambda s: cosine_lr(min(s, total_steps), total_steps, cfg.lr)  # noqa: E731
        else:
            lr_fn = lambda s: cfg.lr  # noqa: E731
        tot, pt, pr = train_epoch(model, bs, opt, cfg.alpha, lr_fn, cfg.mode)
        val = evaluate_loss(model, val_pairs, cfg.alpha, cfg.mode)[0]
        history.append(EpochLog(epoch, tot, pt, pr, val))
        log.info("epoch %d loss %.5f point %.5f pair %.5f val %.5f", epoch, tot, pt, pr, val)
        if val < best[0]:
            best = (val, epoch, model.params.state())
    return Checkpoint(best[2], model.encoder_cfg, cfg, best[0], best[1], history, model.feature_dim)


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)
