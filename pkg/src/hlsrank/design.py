"""Kernels, pragma spaces and per-configuration design graphs.

A :class:`KernelTemplate` fixes the program graph of one kernel. Applying a
:class:`PragmaConfig` to it yields a :class:`DesignGraph`; graphs of the same
kernel share every node and edge and differ only in the features of their
pragma nodes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from hlsrank.errors import ContractError, SchemaError, ValidityError

SCHEMA_VERSION = 1

NODE_KINDS = ("loop", "compute", "load", "store", "pragma")
PRAGMA_KINDS = ("unroll-factor", "pipeline-toggle", "tile-size")
EDGE_KINDS = ("control", "data", "pragma-attachment")

# x_v layout: node-kind one-hot, pragma-kind one-hot, then numeric attributes
NUMERIC_FEATURES = ("log_trip", "depth", "body_size", "tag")
FEATURE_DIM = len(NODE_KINDS) + len(PRAGMA_KINDS) + len(NUMERIC_FEATURES)
PRAGMA_EXTRA_DIM = 3  # raw value, log2 value, value / max legal value


@dataclass(frozen=True)
class PragmaSlot:
    id: str
    kind: str
    legal_values: tuple[int, ...]
    attached_node: int

    def __post_init__(self):
        if self.kind not in PRAGMA_KINDS:
            raise ContractError(f"unknown pragma kind {self.kind!r}")
        vals = tuple(int(v) for v in self.legal_values)
        if not vals:
            raise ContractError(f"slot {self.id}: legal_values is empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ContractError(f"slot {self.id}: legal_values must be strictly increasing")
        object.__setattr__(self, "legal_values", vals)


@dataclass(frozen=True)
class Divisibility:
    """The value of ``slot`` must divide ``n``."""

    slot: str
    n: int

    def holds(self, cfg: Mapping[str, int]) -> bool:
        v = cfg[self.slot]
        return v != 0 and self.n % v == 0

    def describe(self) -> str:
        return f"{self.slot} divides {self.n}"


@dataclass(frozen=True)
class ProductBound:
    """The product of the values of ``slots`` must not exceed ``bound``."""

    slots: tuple[str, ...]
    bound: int

    def holds(self, cfg: Mapping[str, int]) -> bool:
        return math.prod(cfg[s] for s in self.slots) <= self.bound

    def describe(self) -> str:
        return f"prod({', '.join(self.slots)}) <= {self.bound}"


Constraint = Divisibility | ProductBound


@dataclass(frozen=True)
class PragmaConfig:
    """An assignment slot id -> value. Hashable; stored sorted by slot id."""

    items: tuple[tuple[str, int], ...]

    @classmethod
    def of(cls, assignments: Mapping[str, int]) -> PragmaConfig:
        return cls(tuple(sorted((str(k), int(v)) for k, v in assignments.items())))

    def as_dict(self) -> dict[str, int]:
        return dict(self.items)

    def __getitem__(self, slot: str) -> int:
        for k, v in self.items:
            if k == slot:
                return v
        raise KeyError(slot)

    def replace(self, **changes: int) -> PragmaConfig:
        d = self.as_dict()
        d.update(changes)
        return PragmaConfig.of(d)


@dataclass(frozen=True)
class PragmaSpace:
    slots: tuple[PragmaSlot, ...]
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        ids = [s.id for s in self.slots]
        if len(set(ids)) != len(ids):
            raise ContractError(f"duplicate slot ids in {ids}")
        for c in self.constraints:
            named = (c.slot,) if isinstance(c, Divisibility) else c.slots
            for s in named:
                if s not in ids:
                    raise ContractError(f"constraint {c.describe()} names unknown slot {s}")

    def slot(self, slot_id: str) -> PragmaSlot:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise KeyError(slot_id)

    def violations(self, config: PragmaConfig) -> list[str]:
        cfg = config.as_dict()
        problems = []
        ids = {s.id for s in self.slots}
        if set(cfg) != ids:
            problems.append(
                f"slot set mismatch: missing {sorted(ids - set(cfg))}, unknown {sorted(set(cfg) - ids)}"
            )
            return problems
        for s in self.slots:
            if cfg[s.id] not in s.legal_values:
                problems.append(f"{s.id}={cfg[s.id]} not in legal values {list(s.legal_values)}")
        if problems:
            return problems
        return [c.describe() for c in self.constraints if not c.holds(cfg)]

    def is_valid(self, config: PragmaConfig) -> bool:
        return not self.violations(config)

    def validate(self, config: PragmaConfig) -> None:
        problems = self.violations(config)
        if problems:
            raise ValidityError("invalid pragma config: " + "; ".join(problems))

    def key(self, config: PragmaConfig) -> tuple[int, ...]:
        """Lexicographic sort key: values in slot order."""
        return tuple(config[s.id] for s in self.slots)

    def neutral(self) -> PragmaConfig:
        return PragmaConfig.of({s.id: s.legal_values[0] for s in self.slots})


def enumerate_valid(space: PragmaSpace, limit: int | None = None) -> list[PragmaConfig]:
    """All valid configs in lexicographic order over slots, optionally truncated."""
    if limit is not None and limit <= 0:
        return []
    # single-slot constraints are applied before the cartesian product
    per_slot = []
    for s in space.slots:
        own = [c for c in space.constraints if isinstance(c, Divisibility) and c.slot == s.id]
        per_slot.append([v for v in s.legal_values if all(c.holds({s.id: v}) for c in own)])
    joint = [c for c in space.constraints if not isinstance(c, Divisibility)]
    ids = [s.id for s in space.slots]
    out = []
    for values in itertools.product(*per_slot):
        cfg = dict(zip(ids, values))
        if all(c.holds(cfg) for c in joint):
            out.append(PragmaConfig.of(cfg))
            if limit is not None and len(out) >= limit:
                break
    return out


def count_valid(space: PragmaSpace) -> int:
    return len(enumerate_valid(space))


@dataclass(frozen=True, eq=False)
class KernelTemplate:
    kernel_id: str
    node_kinds: tuple[str, ...]
    features: np.ndarray  # [n, FEATURE_DIM], read-only
    edges: tuple[tuple[int, int, str], ...]  # (src, dst, kind)
    pragma_space: PragmaSpace

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != len(self.node_kinds):
            raise ContractError(
                f"features shape {feats.shape} does not match {len(self.node_kinds)} nodes"
            )
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        n = len(self.node_kinds)
        for k in self.node_kinds:
            if k not in NODE_KINDS:
                raise ContractError(f"unknown node kind {k!r}")
        for src, dst, kind in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise ContractError(f"edge ({src}, {dst}) out of range for {n} nodes")
            if kind not in EDGE_KINDS:
                raise ContractError(f"unknown edge kind {kind!r}")
        for s in self.pragma_space.slots:
            if not 0 <= s.attached_node < n:
                raise ContractError(f"slot {s.id} attached to missing node {s.attached_node}")
            if self.node_kinds[s.attached_node] != "pragma":
                raise ContractError(f"slot {s.id} attached to non-pragma node {s.attached_node}")

    @property
    def num_nodes(self) -> int:
        return len(self.node_kinds)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def pragma_value_features(value: int, max_value: int) -> np.ndarray:
    log2v = math.log2(value) if value > 0 else 0.0
    return np.array([float(value), log2v, value / max_value if max_value else 0.0])


@dataclass(frozen=True, eq=False)
class DesignGraph:
    """One design: a template with its pragma nodes set from ``config``.

    ``features`` equals the template's static features. ``pragma_features``
    holds one row per pragma slot (slot order), ``[x_v, raw, log2, v/max]``,
    for node ``pragma_nodes[k]``.
    """

    kernel_id: str
    config: PragmaConfig
    template: KernelTemplate
    pragma_nodes: tuple[int, ...]
    pragma_features: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.template.num_nodes

    @property
    def features(self) -> np.ndarray:
        return self.template.features

    @property
    def edges(self):
        return self.template.edges

    def node_row(self, v: int) -> np.ndarray:
        """Full input feature row of node ``v`` (pragma nodes carry 3 extra columns)."""
        if v in self.pragma_nodes:
            return self.pragma_features[self.pragma_nodes.index(v)]
        return self.features[v]


def instantiate(template: KernelTemplate, config: PragmaConfig) -> DesignGraph:
    template.pragma_space.validate(config)
    rows, nodes = [], []
    for s in template.pragma_space.slots:
        v = config[s.id]
        rows.append(
            np.concatenate([template.features[s.attached_node], pragma_value_features(v, s.legal_values[-1])])
        )
        nodes.append(s.attached_node)
    pf = np.array(rows, dtype=np.float64).reshape(len(rows), template.feature_dim + PRAGMA_EXTRA_DIM)
    pf.setflags(write=False)
    return DesignGraph(template.kernel_id, config, template, tuple(nodes), pf)


def pragma_difference_degree(a: DesignGraph, b: DesignGraph) -> int:
    if a.kernel_id != b.kernel_id:
        raise ContractError(f"cannot compare designs of kernels {a.kernel_id} and {b.kernel_id}")
    return config_distance(a.config, b.config)


def config_distance(a: PragmaConfig, b: PragmaConfig) -> int:
    """Hamming distance over slots."""
    da, db = a.as_dict(), b.as_dict()
    if set(da) != set(db):
        raise ContractError("configs assign different slot sets")
    return sum(da[k] != db[k] for k in da)


# ---------------------------------------------------------------------------
# JSON schema


def _constraint_to_json(c: Constraint) -> dict:
    if isinstance(c, Divisibility):
        return {"type": "divisibility", "slot": c.slot, "n": c.n}
    return {"type": "product_bound", "slots": list(c.slots), "bound": c.bound}


def _constraint_from_json(d: dict) -> Constraint:
    if d["type"] == "divisibility":
        return Divisibility(d["slot"], int(d["n"]))
    if d["type"] == "product_bound":
        return ProductBound(tuple(d["slots"]), int(d["bound"]))
    raise SchemaError(f"unknown constraint type {d['type']!r}")


def space_to_json(space: PragmaSpace) -> dict:
    return {
        "slots": [
            {"id": s.id, "kind": s.kind, "legal_values": list(s.legal_values), "attached_node": s.attached_node}
            for s in space.slots
        ],
        "validity_constraints": [_constraint_to_json(c) for c in space.constraints],
    }


def space_from_json(d: dict) -> PragmaSpace:
    slots = tuple(
        PragmaSlot(s["id"], s["kind"], tuple(s["legal_values"]), int(s["attached_node"])) for s in d["slots"]
    )
    return PragmaSpace(slots, tuple(_constraint_from_json(c) for c in d["validity_constraints"]))


def template_to_json(t: KernelTemplate) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kernel": t.kernel_id,
        "nodes": [{"kind": k, "features": [float(x) for x in row]} for k, row in zip(t.node_kinds, t.features)],
        "edges": [[s, d, k] for s, d, k in t.edges],
        "pragma_space": space_to_json(t.pragma_space),
    }


def template_from_json(d: dict) -> KernelTemplate:
    check_schema(d)
    try:
        return KernelTemplate(
            d["kernel"],
            tuple(n["kind"] for n in d["nodes"]),
            np.array([n["features"] for n in d["nodes"]], dtype=np.float64),
            tuple((int(s), int(t), str(k)) for s, t, k in d["edges"]),
            space_from_json(d["pragma_space"]),
        )
    except KeyError as exc:
        raise SchemaError(f"kernel template missing field {exc}") from exc


def check_schema(d: dict) -> None:
    v = d.get("schema_version")
    if v != SCHEMA_VERSION:
        raise SchemaError(f"schema_version {v!r} unsupported (expected {SCHEMA_VERSION})")


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, repr-exact floats."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False)


def configs_sorted(space: PragmaSpace, configs: Iterable[PragmaConfig]) -> list[PragmaConfig]:
    return sorted(configs, key=space.key)
