"""Seeded synthetic kernels and a deterministic latency oracle.

The oracle stands in for an HLS tool run: latency is a base cycle count
scaled by monotone per-slot responses and bounded pairwise interaction
multipliers, so pragma effects are nonlinear and coupled.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from hlsrank import design as dm
from hlsrank.design import (
    Divisibility,
    DesignGraph,
    KernelTemplate,
    PragmaConfig,
    PragmaSlot,
    PragmaSpace,
    ProductBound,
)
from hlsrank.errors import ContractError, SchemaError

REFERENCE_SPLIT = (0.9034, 0.0483, 0.0483)
SPLITS = ("train", "val", "test")

PROFILES = {
    # (min nodes, max nodes, min slots, max slots)
    "small": (20, 60, 3, 5),
    "medium": (60, 200, 5, 8),
}
SPACE_SIZE_RANGE = (250, 50_000)

_TRIPS = (8, 12, 16, 24, 32, 48, 64, 96, 128)
_UNROLL = (1, 2, 3, 4, 6, 8, 12, 16)
_TILE = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True)
class SlotEffect:
    """Monotone response ``exp(coef * f(v) ** gamma)`` of one slot.

    ``f`` maps the slot's first legal value to 0 and its last to 1 (log scale
    for unroll/tile, identity for the 0/1 pipeline toggle), so the first
    legal value is neutral.
    """

    slot: str
    kind: str
    coef: float
    gamma: float
    min_value: int
    max_value: int

    def position(self, v: int) -> float:
        if self.max_value == self.min_value:
            return 0.0
        if self.kind == "pipeline-toggle":
            return (v - self.min_value) / (self.max_value - self.min_value)
        return math.log2(v / self.min_value) / math.log2(self.max_value / self.min_value)

    def response(self, v: int) -> float:
        return math.exp(self.coef * self.position(v) ** self.gamma)


@dataclass(frozen=True)
class SurrogateOracle:
    kernel_id: str
    base_latency: float
    slot_effects: tuple[SlotEffect, ...]
    interaction_terms: tuple[tuple[str, str, float], ...]
    space: PragmaSpace

    def __post_init__(self):
        if not self.base_latency > 0:
            raise ContractError("base_latency must be positive")
        for _, _, k in self.interaction_terms:
            if abs(k) > math.log(2.0) + 1e-12:
                raise ContractError(f"coupling {k} would leave the [0.5, 2] multiplier band")

    def effect(self, slot: str) -> SlotEffect:
        for e in self.slot_effects:
            if e.slot == slot:
                return e
        raise KeyError(slot)

    def multiplier(self, a: str, b: str, coupling: float, cfg: dict[str, int]) -> float:
        return math.exp(coupling * self.effect(a).position(cfg[a]) * self.effect(b).position(cfg[b]))


def latency(oracle: SurrogateOracle, config: PragmaConfig) -> float:
    """Cycle count of ``config``; raises ValidityError for invalid configs."""
    oracle.space.validate(config)
    cfg = config.as_dict()
    lat = oracle.base_latency
    for e in oracle.slot_effects:
        lat *= e.response(cfg[e.slot])
    for a, b, k in oracle.interaction_terms:
        lat *= oracle.multiplier(a, b, k, cfg)
    return lat


def performance(latency_cycles: float, base: float) -> float:
    """``ln(base / latency)``: 0 at the base latency, larger is faster."""
    if not (latency_cycles > 0 and base > 0):
        raise ContractError(f"latency and base must be positive, got {latency_cycles}, {base}")
    return math.log(base / latency_cycles)


# ---------------------------------------------------------------------------
# kernel generation


def kernel_id_for(seed: int, profile: str) -> str:
    return f"{profile}-{seed:05d}"


def _draw_slots(rng: np.random.Generator, n_slots: int, n_loops: int, trips):
    """Pick (loop, kind, legal values) per slot plus constraints."""
    specs = []
    used = set()
    for i in range(n_slots):
        if i < n_loops:
            loop, kind = i, "unroll-factor"
        else:
            for _ in range(50):
                loop = int(rng.integers(n_loops))
                kind = str(rng.choice(dm.PRAGMA_KINDS))
                if (loop, kind) not in used:
                    break
            else:
                loop, kind = i % n_loops, "tile-size"
        used.add((loop, kind))
        if kind == "unroll-factor":
            pool = [u for u in _UNROLL if u <= trips[loop]]
            size = int(rng.integers(3, min(len(pool), 6) + 1))
            vals = sorted({1, *rng.choice(pool[1:], size=size - 1, replace=False).tolist()})
        elif kind == "tile-size":
            pool = [t for t in _TILE if t <= trips[loop]]
            size = int(rng.integers(3, min(len(pool), 5) + 1))
            vals = sorted({1, *rng.choice(pool[1:], size=size - 1, replace=False).tolist()})
        else:
            vals = [0, 1]
        specs.append((loop, kind, tuple(int(v) for v in vals)))
    return specs


def gen_kernel(seed: int, size_profile: str = "small") -> tuple[KernelTemplate, SurrogateOracle]:
    """Deterministic synthetic kernel and its oracle for ``seed``."""
    if size_profile not in PROFILES:
        raise ContractError(f"unknown size profile {size_profile!r}")
    lo_n, hi_n, lo_s, hi_s = PROFILES[size_profile]
    rng = np.random.default_rng([seed, 0x5EED])
    kid = kernel_id_for(seed, size_profile)

    # loop nest and pragma space; redraw until the valid space lands in range
    for _ in range(500):
        n_slots = int(rng.integers(lo_s, hi_s + 1))
        n_loops = int(rng.integers(2, n_slots + 1))
        trips = [int(rng.choice(_TRIPS)) for _ in range(n_loops)]
        parent = [-1]
        for i in range(1, n_loops):
            # nest under the previous loop or start a sibling of an earlier one
            parent.append(i - 1 if rng.random() < 0.6 else int(rng.integers(-1, i)))
        specs = _draw_slots(rng, n_slots, n_loops, trips)
        space = _build_space(specs, trips, parent)
        size = dm.count_valid(space)
        if SPACE_SIZE_RANGE[0] <= size <= SPACE_SIZE_RANGE[1]:
            break
    else:  # pragma: no cover - generator tuning guard
        raise ContractError(f"could not draw a pragma space in range for seed {seed}")
    depth = []
    for i in range(n_loops):
        depth.append(0 if parent[i] < 0 else depth[parent[i]] + 1)

    n_total = int(rng.integers(lo_n, hi_n + 1))
    n_body = max(n_total - n_loops - n_slots, 2 * n_loops)
    body_loop = np.sort(rng.integers(0, n_loops, size=n_body))
    body_kind = rng.choice(["load", "compute", "compute", "store"], size=n_body)

    kinds: list[str] = ["loop"] * n_loops + [str(k) for k in body_kind] + ["pragma"] * n_slots
    n = len(kinds)
    first_pragma = n_loops + n_body
    body_size = np.bincount(body_loop, minlength=n_loops)

    feats = np.zeros((n, dm.FEATURE_DIM))
    nk, pk = len(dm.NODE_KINDS), len(dm.PRAGMA_KINDS)
    for v, k in enumerate(kinds):
        feats[v, dm.NODE_KINDS.index(k)] = 1.0
    tag = rng.random(n)

    def numeric(v, loop):
        feats[v, nk + pk + 0] = math.log2(trips[loop]) / 7.0
        feats[v, nk + pk + 1] = depth[loop] / 4.0
        feats[v, nk + pk + 2] = body_size[loop] / 20.0
        feats[v, nk + pk + 3] = tag[v]

    edges: list[tuple[int, int, str]] = []
    for i in range(n_loops):
        numeric(i, i)
        if parent[i] >= 0:
            edges.append((parent[i], i, "control"))
    for b in range(n_body):
        v = n_loops + b
        numeric(v, int(body_loop[b]))
        feats[v, nk + pk + 0] = 0.0
        edges.append((int(body_loop[b]), v, "control"))
    # data edges: forward DAG within and across consecutive loop bodies
    for b in range(n_body):
        for c in range(b + 1, min(n_body, b + 4)):
            if rng.random() < 0.45:
                edges.append((n_loops + b, n_loops + c, "data"))

    slots = []
    for s_idx, (loop, kind, vals) in enumerate(specs):
        v = first_pragma + s_idx
        numeric(v, loop)
        feats[v, nk + dm.PRAGMA_KINDS.index(kind)] = 1.0
        edges.append((v, loop, "pragma-attachment"))
        slots.append(PragmaSlot(f"s{s_idx}", kind, vals, v))
    space = PragmaSpace(tuple(slots), space.constraints)
    template = KernelTemplate(kid, tuple(kinds), feats, tuple(edges), space)

    # oracle
    effects = []
    for (loop, kind, vals), slot in zip(specs, slots):
        # log-uniform magnitudes: some pragmas barely matter, a few dominate
        weight = min(1.0, 0.4 + body_size[loop] / 10.0)
        magnitude = math.exp(rng.uniform(math.log(0.1), math.log(1.6)))
        if kind == "unroll-factor":
            coef = -magnitude * weight
        elif kind == "pipeline-toggle":
            coef = -magnitude
        else:
            coef = magnitude * (1.0 if rng.random() < 0.3 else -1.0)
        effects.append(SlotEffect(slot.id, kind, float(coef), float(0.5 + 1.5 * rng.random()), vals[0], vals[-1]))
    n_terms = int(rng.integers(1, max(2, n_slots)))
    pairs = [(a, b) for a in range(n_slots) for b in range(a + 1, n_slots)]
    chosen = rng.choice(len(pairs), size=min(n_terms, len(pairs)), replace=False)
    inter = tuple(
        (slots[pairs[c][0]].id, slots[pairs[c][1]].id, float(math.log(2.0) * (2 * rng.random() - 1)))
        for c in sorted(chosen.tolist())
    )
    base = 100.0
    for i in range(n_loops):
        span, p = trips[i], parent[i]
        while p >= 0:
            span *= trips[p]
            p = parent[p]
        base += span * (1 + body_size[i])
    oracle = SurrogateOracle(kid, float(base), tuple(effects), inter, space)
    return template, oracle


def _build_space(specs, trips, parent) -> PragmaSpace:
    slots = tuple(PragmaSlot(f"s{i}", kind, vals, 0) for i, (_, kind, vals) in enumerate(specs))
    cons = []
    unroll_by_loop = {}
    for i, (loop, kind, _) in enumerate(specs):
        if kind == "unroll-factor":
            cons.append(Divisibility(f"s{i}", trips[loop]))
            unroll_by_loop[loop] = f"s{i}"
    # nested unrolls share one resource budget
    chains = sorted(unroll_by_loop)
    nested = [unroll_by_loop[l] for l in chains if parent[l] >= 0 and parent[l] in unroll_by_loop]
    if nested:
        group = sorted({*nested, *(unroll_by_loop[parent[l]] for l in chains if parent[l] in unroll_by_loop)})
        cons.append(ProductBound(tuple(group), 64))
    return PragmaSpace(slots, tuple(cons))


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True, eq=False)
class Record:
    graph: DesignGraph
    latency: float
    y: float
    split: str

    @property
    def kernel_id(self) -> str:
        return self.graph.kernel_id

    @property
    def config(self) -> PragmaConfig:
        return self.graph.config


@dataclass
class Dataset:
    records: list[Record]
    templates: dict[str, KernelTemplate] = field(default_factory=dict)

    def split(self, name: str) -> list[Record]:
        return [r for r in self.records if r.split == name]

    def kernel_ids(self) -> list[str]:
        seen = []
        for r in self.records:
            if r.kernel_id not in seen:
                seen.append(r.kernel_id)
        return seen

    def by_kernel(self, split: str | None = None) -> dict[str, list[Record]]:
        out: dict[str, list[Record]] = {k: [] for k in self.kernel_ids()}
        for r in self.records:
            if split is None or r.split == split:
                out[r.kernel_id].append(r)
        return out


def _split_counts(n: int, fracs: Sequence[float]) -> list[int]:
    edges = [0] + [int(round(c * n)) for c in np.cumsum(fracs)]
    edges[-1] = n
    return [edges[i + 1] - edges[i] for i in range(len(fracs))]


def build_dataset(
    kernels: Sequence[tuple[KernelTemplate, SurrogateOracle]],
    samples_per_kernel: int,
    split_fracs: Sequence[float] = REFERENCE_SPLIT,
    seed: int = 0,
) -> Dataset:
    """Sample designs per kernel and assign splits, stratified by kernel."""
    if len(split_fracs) != 3 or abs(sum(split_fracs) - 1.0) > 1e-6:
        raise ContractError(f"split fractions must be 3 values summing to 1, got {split_fracs}")
    if any(f < 0 for f in split_fracs):
        raise ContractError("split fractions must be nonnegative")
    records: list[Record] = []
    templates = {}
    for k, (template, oracle) in enumerate(kernels):
        templates[template.kernel_id] = template
        rng = np.random.default_rng([seed, k])
        space = dm.enumerate_valid(template.pragma_space)
        if samples_per_kernel >= len(space):
            if samples_per_kernel > len(space):
                warnings.warn(
                    f"{template.kernel_id}: {samples_per_kernel} samples requested, "
                    f"valid space has {len(space)}; using all",
                    stacklevel=2,
                )
            chosen = space
        else:
            idx = np.sort(rng.choice(len(space), size=samples_per_kernel, replace=False))
            chosen = [space[i] for i in idx]
        order = rng.permutation(len(chosen))
        labels = np.empty(len(chosen), dtype=object)
        start = 0
        for name, count in zip(SPLITS, _split_counts(len(chosen), split_fracs)):
            labels[order[start : start + count]] = name
            start += count
        for cfg, split in zip(chosen, labels):
            lat = latency(oracle, cfg)
            records.append(
                Record(dm.instantiate(template, cfg), lat, performance(lat, oracle.base_latency), str(split))
            )
    return Dataset(records, templates)


# ---------------------------------------------------------------------------
# benchmark + IO


@dataclass(frozen=True)
class BenchmarkSpec:
    seed: int
    kernel_seeds: tuple[int, ...]
    profile: str = "small"
    samples_per_kernel: int = 200
    split_fracs: tuple[float, float, float] = REFERENCE_SPLIT

    @classmethod
    def seeded(cls, seed: int, n_kernels: int, profile: str = "small", samples_per_kernel: int = 200,
               split_fracs=REFERENCE_SPLIT) -> BenchmarkSpec:
        return cls(seed, tuple(seed * 1000 + i + 1 for i in range(n_kernels)), profile,
                   samples_per_kernel, tuple(split_fracs))

    def to_json(self) -> dict:
        return {
            "schema_version": dm.SCHEMA_VERSION,
            "seed": self.seed,
            "kernels": [
                {"seed": s, "profile": self.profile, "kernel_id": kernel_id_for(s, self.profile)}
                for s in self.kernel_seeds
            ],
            "samples_per_kernel": self.samples_per_kernel,
            "split_fracs": list(self.split_fracs),
        }

    @classmethod
    def from_json(cls, d: dict) -> BenchmarkSpec:
        dm.check_schema(d)
        profiles = {k["profile"] for k in d["kernels"]}
        if len(profiles) > 1:
            raise SchemaError("mixed kernel profiles in one benchmark are not supported")
        return cls(
            int(d["seed"]),
            tuple(int(k["seed"]) for k in d["kernels"]),
            profiles.pop() if profiles else "small",
            int(d["samples_per_kernel"]),
            tuple(d["split_fracs"]),
        )

    def kernels(self) -> list[tuple[KernelTemplate, SurrogateOracle]]:
        return [gen_kernel(s, self.profile) for s in self.kernel_seeds]

    def build(self) -> Dataset:
        return build_dataset(self.kernels(), self.samples_per_kernel, self.split_fracs, self.seed)


def record_to_json(r: Record) -> dict:
    return {"kernel_id": r.kernel_id, "config": r.config.as_dict(), "latency": r.latency, "y": r.y, "split": r.split}


def write_dataset(dataset: Dataset, out_dir: Path, bench: BenchmarkSpec | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    kpath = out_dir / "kernels.json"
    kpath.write_text(
        dm.dumps({"schema_version": dm.SCHEMA_VERSION,
                  "kernels": [dm.template_to_json(t) for t in dataset.templates.values()]}) + "\n"
    )
    paths.append(kpath)
    dpath = out_dir / "dataset.jsonl"
    with dpath.open("w") as fh:
        for r in dataset.records:
            fh.write(json.dumps(record_to_json(r), sort_keys=True) + "\n")
    paths.append(dpath)
    if bench is not None:
        mpath = out_dir / "benchmark_manifest.json"
        mpath.write_text(dm.dumps(bench.to_json()) + "\n")
        paths.append(mpath)
    return paths


def read_templates(path: Path) -> dict[str, KernelTemplate]:
    d = json.loads(Path(path).read_text())
    dm.check_schema(d)
    return {t.kernel_id: t for t in (dm.template_from_json(k) for k in d["kernels"])}


def load_dataset(data_dir: Path) -> Dataset:
    data_dir = Path(data_dir)
    templates = read_templates(data_dir / "kernels.json")
    records = []
    with (data_dir / "dataset.jsonl").open() as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            d = json.loads(line)
            try:
                t = templates[d["kernel_id"]]
                cfg = PragmaConfig.of(d["config"])
                records.append(Record(dm.instantiate(t, cfg), float(d["latency"]), float(d["y"]), d["split"]))
            except KeyError as exc:
                raise SchemaError(f"dataset.jsonl line {line_no}: missing {exc}") from exc
    return Dataset(records, templates)


def load_benchmark(data_dir: Path) -> BenchmarkSpec:
    return BenchmarkSpec.from_json(json.loads((Path(data_dir) / "benchmark_manifest.json").read_text()))


def oracles_for(bench: BenchmarkSpec) -> dict[str, SurrogateOracle]:
    return {o.kernel_id: o for _, o in bench.kernels()}

