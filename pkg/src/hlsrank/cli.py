"""Command-line entry point: ``hlsrank {gen,train,eval,dse,report,sweep-alpha}``.

Every run resolves one JSON config (defaults, then ``--config``, then
``--set key=value`` overrides), takes all randomness from ``--seed`` and
writes ``run_manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from hlsrank import design as dm
from hlsrank import dse as dse_mod
from hlsrank import evaluation as ev
from hlsrank import surrogate as sg
from hlsrank.encoder import EncoderConfig
from hlsrank.errors import ConfigError, HlsRankError
from hlsrank.heads import ALPHA_GRID
from hlsrank.trainer import Checkpoint, TrainConfig, fit, write_loss_curve

COMMANDS = ("gen", "train", "eval", "dse", "report", "sweep-alpha")
OUT_ENV = "HLSRANK_OUT"
MANIFEST = "run_manifest.json"

EXIT_CODES = {
    "error": 1,
    "usage": 2,
    "config": 3,
    "schema": 4,
    "io": 5,
    "contract": 6,
    "validity": 7,
    "numerical": 8,
    "dimension": 9,
    "internal": 10,
}


def default_config() -> dict:
    train = asdict(TrainConfig())
    train["betas"] = list(train["betas"])
    train.pop("seed")
    enc = asdict(EncoderConfig())
    enc["pragma_mlp_dims"] = list(enc["pragma_mlp_dims"])
    return {
        "bench": {"n_kernels": 3, "profile": "small", "samples_per_kernel": 200, "split_fracs": list(sg.REFERENCE_SPLIT)},
        "train": train,
        "encoder": enc,
        "dse": {"k1": dse_mod.DEFAULT_K1, "k2": dse_mod.DEFAULT_K2, "batch": dse_mod.DEFAULT_BATCH, "budget": 2000},
        "sweep": {"alphas": list(ALPHA_GRID)},
    }


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    *path, leaf = key.split(".")
    node = cfg
    for part in path:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config section {key!r}")
        node = node[part]
    if leaf not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[leaf] = _parse_value(raw)


def merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in out:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {where + k!r} must be an object")
            out[k] = merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    command: str
    seed: int
    out: Path
    config_path: Path | None = None
    overrides: list[str] = field(default_factory=list)
    resolved: dict = field(default_factory=default_config)

    def resolve(self) -> RunConfig:
        cfg = default_config()
        if self.config_path is not None:
            try:
                cfg = merge(cfg, json.loads(Path(self.config_path).read_text()))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        for o in self.overrides:
            apply_override(cfg, o)
        self.resolved = cfg
        return self

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig.from_dict({**self.resolved["train"], "seed": self.seed,
                                          "betas": tuple(self.resolved["train"]["betas"])})
        except TypeError as exc:
            raise ConfigError(f"bad train config: {exc}") from exc

    def encoder_config(self) -> EncoderConfig:
        enc = self.resolved["encoder"]
        try:
            return EncoderConfig(**{**enc, "pragma_mlp_dims": tuple(enc["pragma_mlp_dims"])})
        except TypeError as exc:
            raise ConfigError(f"bad encoder config: {exc}") from exc


# ---------------------------------------------------------------------------
# manifest


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(run: RunConfig, inputs: dict[str, Path], outputs: Sequence[Path]) -> Path:
    """Inputs are keyed by role and basename, never absolute paths, so reruns elsewhere match."""
    doc = {
        "schema_version": dm.SCHEMA_VERSION,
        "command": run.command,
        "seed": run.seed,
        "config": run.resolved,
        "inputs": {k: {"file": Path(p).name, "sha256": sha256_file(p)} for k, p in sorted(inputs.items())},
        "outputs": {
            str(Path(p).relative_to(run.out)): sha256_file(p) for p in sorted(outputs, key=lambda p: str(p))
        },
    }
    path = run.out / MANIFEST
    path.write_text(dm.dumps(doc) + "\n")
    return path


def _data_inputs(data: Path) -> dict[str, Path]:
    return {f"data:{n}": data / n for n in ("kernels.json", "dataset.jsonl", "benchmark_manifest.json")
            if (data / n).exists()}


# ---------------------------------------------------------------------------
# commands


def cmd_gen(run: RunConfig, args) -> list[Path]:
    b = run.resolved["bench"]
    bench = sg.BenchmarkSpec.seeded(run.seed, int(b["n_kernels"]), b["profile"], int(b["samples_per_kernel"]),
                                    tuple(b["split_fracs"]))
    if b["profile"] not in sg.PROFILES:
        raise ConfigError(f"unknown profile {b['profile']!r}")
    return sg.write_dataset(bench.build(), run.out, bench)


def _train(run: RunConfig, dataset: sg.Dataset, out_dir: Path, alpha: float | None = None):
    cfg = run.train_config()
    if alpha is not None:
        cfg = TrainConfig.from_dict({**asdict(cfg), "alpha": alpha})
    ck = fit(dataset, cfg, run.encoder_config())
    return ck, [ck.save(out_dir / "checkpoint.json"), write_loss_curve(ck.history, out_dir / "loss_curve.csv")]


def cmd_train(run: RunConfig, args) -> list[Path]:
    _, paths = _train(run, sg.load_dataset(args.data), run.out)
    return paths


def _load_checkpoint(path: Path) -> tuple[Checkpoint, str]:
    return Checkpoint.load(path), sha256_file(path)


def cmd_eval(run: RunConfig, args) -> list[Path]:
    ck, digest = _load_checkpoint(args.checkpoint)
    rep = ev.evaluate(ck.model(), sg.load_dataset(args.data), run.seed, digest, split=args.split)
    return ev.write_report(rep, run.out)


def cmd_dse(run: RunConfig, args) -> list[Path]:
    ck, _ = _load_checkpoint(args.checkpoint)
    d = run.resolved["dse"]
    k1 = args.k1 if args.k1 is not None else int(d["k1"])
    k2 = args.k2 if args.k2 is not None else int(d["k2"])
    batch = args.batch if args.batch is not None else d["batch"]
    budget = args.budget if args.budget is not None else d["budget"]
    template, _ = sg.gen_kernel(args.kernel_seed, run.resolved["bench"]["profile"])
    res = dse_mod.explore(template, ck.model(), k1, k2, budget, batch, run.seed, args.stage1_only)
    return [res.save(run.out / "dse_result.json")]


def cmd_report(run: RunConfig, args) -> list[Path]:
    ck, digest = _load_checkpoint(args.checkpoint)
    dataset = sg.load_dataset(args.data)
    model = ck.model()
    rows = []
    paths = []
    if not args.no_dse:
        d = run.resolved["dse"]
        bench = sg.load_benchmark(args.data)
        for template, oracle in bench.kernels():
            row, two, s1 = ev.dse_comparison(template, oracle, model, int(d["k1"]), int(d["k2"]), d["budget"],
                                             d["batch"], run.seed)
            rows.append(row)
            paths.append(two.save(run.out / "dse" / f"{template.kernel_id}.two_stage.json"))
            paths.append(s1.save(run.out / "dse" / f"{template.kernel_id}.stage1_only.json"))
    rep = ev.evaluate(model, dataset, run.seed, digest, split=args.split, dse=rows)
    return ev.write_report(rep, run.out) + paths


def cmd_sweep_alpha(run: RunConfig, args) -> list[Path]:
    dataset = sg.load_dataset(args.data)
    rows = []
    paths = []
    for alpha in run.resolved["sweep"]["alphas"]:
        sub = run.out / f"alpha_{float(alpha):g}"
        ck, ck_paths = _train(run, dataset, sub, float(alpha))
        paths += ck_paths
        rep = ev.evaluate(ck.model(), dataset, run.seed, sha256_file(ck_paths[0]), split=args.split)
        last = ck.history[-1]
        rows.append(ev.AlphaRow(float(alpha), last.total, last.point, last.pair, ck.best_val_loss,
                                rep.acc["ALL"].accuracy, rep.tau_pooled, rep.rmse, run.seed, rep.checkpoint))
    return paths + [ev.write_alpha_sweep(rows, run.out / "alpha_sweep.csv")]


HANDLERS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "dse": cmd_dse,
    "report": cmd_report,
    "sweep-alpha": cmd_sweep_alpha,
}


def _inputs(args) -> dict[str, Path]:
    inputs = {}
    if getattr(args, "data", None) is not None:
        inputs.update(_data_inputs(args.data))
    if getattr(args, "checkpoint", None) is not None:
        inputs["checkpoint"] = args.checkpoint
    if args.config is not None:
        inputs["config"] = args.config
    return inputs


# ---------------------------------------------------------------------------
# argument parsing


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file layered over the defaults")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override such as train.epochs=50 (value parsed as JSON when possible)")
    common.add_argument("--seed", type=int, default=0, help="single source of randomness for the run")
    common.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: ${OUT_ENV} or ./runs/<command>)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="hlsrank", description="Pairwise ranking of HLS pragma designs and two-stage DSE.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gen", parents=[common], help="generate a seeded synthetic benchmark")

    def with_data(sp):
        sp.add_argument("--data", type=Path, required=True, help="directory written by `gen`")

    def with_split(sp):
        sp.add_argument("--split", default="test", choices=sg.SPLITS, help="split to evaluate (default test)")

    def with_ckpt(sp):
        sp.add_argument("--checkpoint", type=Path, required=True, help="checkpoint.json written by `train`")

    with_data(sub.add_parser("train", parents=[common], help="train a model on a benchmark"))

    sp = sub.add_parser("eval", parents=[common], help="RMSE, pairwise accuracy and Kendall tau")
    with_data(sp)
    with_ckpt(sp)
    with_split(sp)

    sp = sub.add_parser("dse", parents=[common], help="two-stage exploration of one kernel")
    with_ckpt(sp)
    sp.add_argument("--kernel-seed", type=int, required=True, help="seed of the kernel to explore")
    sp.add_argument("--k1", type=int, help="stage-1 survivors (default from config, 100)")
    sp.add_argument("--k2", type=int, help="final survivors (default from config, 10)")
    sp.add_argument("--batch", type=int, help="pairs per comparator batch (default from config, 512)")
    sp.add_argument("--budget", type=int, help="max candidates sampled from the valid space")
    sp.add_argument("--stage1-only", action="store_true", help="ablation: keep the top-k2 of stage 1")

    sp = sub.add_parser("report", parents=[common], help="metrics plus DSE latency comparison per kernel")
    with_data(sp)
    with_ckpt(sp)
    with_split(sp)
    sp.add_argument("--no-dse", action="store_true", help="metrics only")

    sp = sub.add_parser("sweep-alpha", parents=[common], help="train one model per alpha in the grid")
    with_data(sp)
    with_split(sp)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = args.out or Path(os.environ.get(OUT_ENV, "runs")) / args.command
    try:
        rc = RunConfig(args.command, args.seed, Path(out), args.config, args.overrides).resolve()
        for p in ("data", "checkpoint"):
            path = getattr(args, p, None)
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"{p} path {path} does not exist")
        rc.out.mkdir(parents=True, exist_ok=True)
        outputs = HANDLERS[args.command](rc, args)
        write_manifest(rc, _inputs(args), outputs)
    except HlsRankError as exc:
        return _fail(exc.category, str(exc))
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("io", str(exc))
    except json.JSONDecodeError as exc:
        return _fail("schema", f"malformed JSON: {exc}")
    return 0


def _fail(category: str, message: str) -> int:
    line = " ".join(message.split())
    print(f"error: {category}: {line}", file=sys.stderr)
    return EXIT_CODES[category]


def main() -> None:
    sys.exit(run())

