"""Command-line entry points and the flat key-value run configuration.

Config files are `key = value` lines with dotted section keys ("#" starts a
comment line). Every value has a default, so a minimal training config is
just data paths plus output.dir; `--set key=value` overrides anything. The
resolved configuration is snapshotted into the output directory and
re-parses to an identical RunConfig.
"""

from __future__ import annotations

import argparse
import csv
import os
import re
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import evaluator, trainer
from .demix import DemixConfig
from .errors import ConfigError, KgeError
from .kg_store import (
    DataSplits,
    TripleSet,
    build_filter_index,
    build_pattern_index,
    load_splits,
    load_vocab,
)
from .sampler import SamplerConfig
from .scoring import DISTANCE_KINDS, KINDS, load_checkpoint
from .trainer import TrainConfig

RESOLVED_CONFIG_NAME = "config_resolved.cfg"
DIAGNOSE_MODES = ("estimation_accuracy", "leakage_compare", "export_embeddings")

_CKPT_RE = re.compile(r"^checkpoint-(\d+)\.ckpt$")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse `key = value` lines into a flat string map."""
    flat: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in flat:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        flat[key] = value
    return flat


def _to_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _to_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _to_bool(value: str, key: str) -> bool:
    low = value.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


class _Flat:
    """Typed popper over the raw key map; leftovers are unknown keys."""

    def __init__(self, raw: dict[str, str]):
        self.raw = dict(raw)

    def pop_str(self, key: str, default=None):
        return self.raw.pop(key, default)

    def pop_int(self, key: str, default: int) -> int:
        value = self.raw.pop(key, None)
        return default if value is None else _to_int(value, key)

    def pop_float(self, key: str, default: float) -> float:
        value = self.raw.pop(key, None)
        return default if value is None else _to_float(value, key)

    def pop_bool(self, key: str, default: bool) -> bool:
        value = self.raw.pop(key, None)
        return default if value is None else _to_bool(value, key)

    def leftover(self) -> list[str]:
        return sorted(self.raw)


@dataclass
class RunConfig:
    """Everything one command needs, resolved to concrete values."""

    trainer: TrainConfig
    sampler: SamplerConfig
    demix: DemixConfig
    train_path: str | None = None
    valid_path: str | None = None
    test_path: str | None = None
    entity_dict: str | None = None
    relation_dict: str | None = None
    on_duplicate: str = "error"
    out_dir: str | None = None
    threads: int = 1

    @classmethod
    def from_flat(cls, raw: dict[str, str]) -> "RunConfig":
        f = _Flat(raw)
        kind = f.pop_str("model.kind", "TransE")
        if kind not in KINDS:
            raise ConfigError(f"model.kind must be one of {KINDS}, got {kind!r}")
        dim = f.pop_int("model.dim", 200)
        margin = f.pop_float("model.margin", 9.0)
        norm_raw = f.pop_str("model.norm", "auto")
        if norm_raw == "auto":
            norm = 1 if kind == "TransE" else 2
        else:
            norm = _to_int(norm_raw, "model.norm")

        strategy = f.pop_str("sampler.strategy", "demix")
        negatives = f.pop_int(
            "sampler.negatives", 16 if kind in DISTANCE_KINDS else 50
        )
        temperature = f.pop_float("sampler.temperature", 1.0)
        sampler_cfg = SamplerConfig(
            strategy=strategy,
            negatives=negatives,
            leakage_filter=f.pop_bool("sampler.leakage_filter", False),
            temperature=temperature,
            allow_train_collisions=f.pop_bool("sampler.allow_train_collisions", False),
        )

        warmup = f.pop_int("demix.warmup_epochs", 8)
        demix_cfg = DemixConfig(
            delta=f.pop_float("demix.delta", 0.1),
            beta=f.pop_float("demix.beta", 3.0),
            t0=f.pop_int("demix.t0", max(1, warmup)),
            mu=f.pop_int("demix.mu", 3),
            alpha=f.pop_float("demix.alpha", 1.0),
            warmup_epochs=warmup,
        )

        loss_default = (
            "self_adversarial" if strategy in ("self_adversarial", "demix") else "uniform"
        )
        train_cfg = TrainConfig(
            kind=kind,
            dim=dim,
            margin=margin,
            norm=norm,
            epochs=f.pop_int("trainer.epochs", 48),
            warmup_epochs=warmup,
            batch_size=f.pop_int("trainer.batch_size", 256),
            learning_rate=f.pop_float("trainer.learning_rate", 1e-4),
            negatives=negatives,
            loss=f.pop_str("trainer.loss", loss_default),
            temperature=temperature,
            l3_reg=f.pop_float("trainer.l3_reg", 0.0),
            seed=f.pop_int("seed", 0),
            checkpoint_every=f.pop_int("trainer.checkpoint_every", 8),
            eval_every=f.pop_int("trainer.eval_every", 1),
        )

        rc = cls(
            trainer=train_cfg,
            sampler=sampler_cfg,
            demix=demix_cfg,
            train_path=f.pop_str("data.train"),
            valid_path=f.pop_str("data.valid"),
            test_path=f.pop_str("data.test"),
            entity_dict=f.pop_str("data.entity_dict"),
            relation_dict=f.pop_str("data.relation_dict"),
            on_duplicate=f.pop_str("data.on_duplicate", "error"),
            out_dir=f.pop_str("output.dir"),
            threads=f.pop_int("threads", 1),
        )
        leftover = f.leftover()
        if leftover:
            raise ConfigError(f"unknown config key(s): {', '.join(leftover)}")
        return rc

    def to_flat(self) -> dict[str, str]:
        t, s, d = self.trainer, self.sampler, self.demix
        flat = {
            "model.kind": t.kind,
            "model.dim": str(t.dim),
            "model.margin": repr(t.margin),
            "model.norm": str(t.norm),
            "sampler.strategy": s.strategy,
            "sampler.negatives": str(s.negatives),
            "sampler.temperature": repr(s.temperature),
            "sampler.leakage_filter": "true" if s.leakage_filter else "false",
            "sampler.allow_train_collisions": "true" if s.allow_train_collisions else "false",
            "demix.delta": repr(d.delta),
            "demix.beta": repr(d.beta),
            "demix.t0": str(d.t0),
            "demix.mu": str(d.mu),
            "demix.alpha": repr(d.alpha),
            "demix.warmup_epochs": str(d.warmup_epochs),
            "trainer.epochs": str(t.epochs),
            "trainer.batch_size": str(t.batch_size),
            "trainer.learning_rate": repr(t.learning_rate),
            "trainer.loss": t.loss,
            "trainer.l3_reg": repr(t.l3_reg),
            "trainer.eval_every": str(t.eval_every),
            "trainer.checkpoint_every": str(t.checkpoint_every),
            "data.on_duplicate": self.on_duplicate,
            "seed": str(t.seed),
            "threads": str(self.threads),
        }
        for key, value in (
            ("data.train", self.train_path),
            ("data.valid", self.valid_path),
            ("data.test", self.test_path),
            ("data.entity_dict", self.entity_dict),
            ("data.relation_dict", self.relation_dict),
            ("output.dir", self.out_dir),
        ):
            if value is not None:
                flat[key] = value
        return flat

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.to_flat().items()))

    def validate(self, require_data: bool = False, require_out: bool = False):
        self.trainer.validate()
        self.sampler.validate()
        self.demix.validate()
        if self.on_duplicate not in ("error", "dedup"):
            raise ConfigError(
                f"data.on_duplicate must be 'error' or 'dedup', got {self.on_duplicate!r}"
            )
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if require_data and self.train_path is None:
            raise ConfigError("data.train is required")
        if require_out and self.out_dir is None:
            raise ConfigError("output.dir is required")
        for key, path in (
            ("data.train", self.train_path),
            ("data.valid", self.valid_path),
            ("data.test", self.test_path),
            ("data.entity_dict", self.entity_dict),
            ("data.relation_dict", self.relation_dict),
        ):
            if path is not None and not os.path.isfile(path):
                raise ConfigError(f"{key}: no such file: {path}")
        if (self.entity_dict is None) != (self.relation_dict is None):
            raise ConfigError("data.entity_dict and data.relation_dict go together")


def load_run_config(path, overrides: list[str]) -> RunConfig:
    """Read a config file and apply `--set key=value` overrides."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    flat = parse_config_text(text, source=str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        flat[key.strip()] = value.strip()
    return RunConfig.from_flat(flat)


def _resolve_threads(args, rc: RunConfig):
    if args.threads is not None:
        rc.threads = args.threads
    else:
        env = os.environ.get("DEMIX_KGE_THREADS")
        if env:
            rc.threads = _to_int(env, "DEMIX_KGE_THREADS")


def _load_data(rc: RunConfig) -> DataSplits:
    vocab = None
    if rc.entity_dict is not None and rc.relation_dict is not None:
        vocab = load_vocab(rc.entity_dict, rc.relation_dict)
    return load_splits(
        rc.train_path, rc.valid_path, rc.test_path,
        vocab=vocab, on_duplicate=rc.on_duplicate,
    )


def _check_vocab(model, vocab):
    if model.num_entities != vocab.num_entities or model.num_relations != vocab.num_relations:
        raise ConfigError(
            f"checkpoint shape ({model.num_entities} entities, "
            f"{model.num_relations} relations) does not match the dataset "
            f"({vocab.num_entities}, {vocab.num_relations})"
        )


def cmd_train(args) -> int:
    rc = load_run_config(args.config, args.set)
    _resolve_threads(args, rc)
    rc.validate(require_data=True, require_out=True)
    splits = _load_data(rc)
    os.makedirs(rc.out_dir, exist_ok=True)
    with open(os.path.join(rc.out_dir, RESOLVED_CONFIG_NAME), "w", encoding="utf-8") as fh:
        fh.write(rc.to_text())
    log = None if args.quiet else print
    _, rows = trainer.train(
        splits, rc.trainer, rc.demix, rc.sampler,
        out_dir=rc.out_dir, threads=rc.threads, log=log,
    )
    evaluated = [row for row in rows if row["mrr"] is not None]
    if evaluated:
        last = evaluated[-1]
        print(
            f"done: epoch {last['epoch']} valid mrr={last['mrr']:.4f} "
            f"hits@10={last['hits10']:.4f}"
        )
    else:
        print("done (no validation metrics; valid split empty or never evaluated)")
    return 0


def _write_eval_csv(path, epoch: int, split: str, report, wall: float):
    trainer.write_metrics_csv(path, [{
        "epoch": epoch, "split": split,
        "mrr": report.mrr, "hits1": report.hits1,
        "hits3": report.hits3, "hits10": report.hits10,
        "loss": None, "wall_clock_s": wall,
    }])


def cmd_eval(args) -> int:
    rc = load_run_config(args.config, args.set)
    _resolve_threads(args, rc)
    rc.validate(require_data=True)
    splits = _load_data(rc)
    if not os.path.isfile(args.checkpoint):
        raise ConfigError(f"no such checkpoint: {args.checkpoint}")
    model, epoch = load_checkpoint(args.checkpoint)
    _check_vocab(model, splits.vocab)

    triples = {"train": splits.train, "valid": splits.valid, "test": splits.test}[args.split]
    if len(triples) == 0:
        raise ConfigError(f"split {args.split!r} is empty")
    filter_index = build_filter_index(splits.train, splits.valid, splits.test)
    t0 = time.monotonic()
    report, ranks = evaluator.evaluate(model, triples, filter_index, threads=rc.threads)
    wall = time.monotonic() - t0
    print(
        f"split={args.split} queries={report.count} mrr={report.mrr:.4f} "
        f"hits@1={report.hits1:.4f} hits@3={report.hits3:.4f} hits@10={report.hits10:.4f}"
    )
    if rc.out_dir is not None:
        os.makedirs(rc.out_dir, exist_ok=True)
        _write_eval_csv(
            os.path.join(rc.out_dir, f"eval_{args.split}.csv"), epoch, args.split, report, wall
        )
        by_rel = evaluator.metrics_by_relation(ranks)
        with open(
            os.path.join(rc.out_dir, f"eval_{args.split}_by_relation.csv"),
            "w", newline="", encoding="utf-8",
        ) as fh:
            writer = csv.writer(fh)
            writer.writerow(["relation", "count", "mrr", "hits1", "hits3", "hits10"])
            for rid, rep in by_rel.items():
                writer.writerow([
                    splits.vocab.relation_names[rid], rep.count,
                    f"{rep.mrr:.6f}", f"{rep.hits1:.6f}",
                    f"{rep.hits3:.6f}", f"{rep.hits10:.6f}",
                ])
    return 0


def _scan_checkpoints(run_dir) -> list[tuple[int, str]]:
    found: dict[int, str] = {}
    for name in sorted(os.listdir(run_dir)):
        match = _CKPT_RE.match(name)
        if match:
            found[int(match.group(1))] = os.path.join(run_dir, name)
    final = os.path.join(run_dir, "checkpoint-final.ckpt")
    if os.path.isfile(final):
        _, epoch = load_checkpoint(final)
        found.setdefault(epoch, final)
    return sorted(found.items())


def _diag_estimation(args, rc: RunConfig, splits: DataSplits) -> int:
    run_dir = args.run_dir or rc.out_dir
    if run_dir is None:
        raise ConfigError("estimation_accuracy needs --run-dir or output.dir")
    if not os.path.isdir(run_dir):
        raise ConfigError(f"no such run directory: {run_dir}")
    checkpoints = _scan_checkpoints(run_dir)
    if not checkpoints:
        raise ConfigError(f"no checkpoints found under {run_dir}")
    planted_arr = np.concatenate([splits.valid.triples, splits.test.triples])
    if len(planted_arr) == 0:
        raise ConfigError("estimation_accuracy needs a nonempty valid or test split")
    planted = TripleSet(np.unique(planted_arr, axis=0))
    index = build_pattern_index(splits.train)

    rows = []
    for epoch, path in checkpoints:
        model, _ = load_checkpoint(path)
        _check_vocab(model, splits.vocab)
        epoch_t = max(0, epoch - rc.demix.warmup_epochs)
        report = evaluator.estimation_accuracy(
            model, planted, index, rc.demix, epoch_t, with_baseline=True
        )
        for side_name, est in (("hr", report.hr), ("rt", report.rt)):
            rows.append((epoch, side_name, est))
        if not args.quiet:
            print(
                f"epoch {epoch}: hr recall={report.hr.accuracy:.4f} "
                f"(baseline {report.hr.baseline:.4f}), "
                f"rt recall={report.rt.accuracy:.4f} "
                f"(baseline {report.rt.baseline:.4f})"
            )
    out_path = os.path.join(run_dir, "estimation_accuracy.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "side", "evaluable", "detected", "accuracy", "baseline"])
        for epoch, side_name, est in rows:
            writer.writerow([
                epoch, side_name, est.evaluable, est.detected,
                f"{est.accuracy:.6f}", f"{est.baseline:.6f}",
            ])
    print(f"wrote {out_path}")
    return 0


def _diag_leakage(args, rc: RunConfig, splits: DataSplits) -> int:
    if rc.out_dir is None:
        raise ConfigError("leakage_compare needs output.dir")
    os.makedirs(rc.out_dir, exist_ok=True)
    log = None if args.quiet else print
    curves = {}
    finals = {}
    filter_index = build_filter_index(splits.train, splits.valid, splits.test)
    eval_split = splits.test if len(splits.test) else splits.valid
    eval_name = "test" if len(splits.test) else "valid"
    for tag, leak in (("normal", False), ("leakage", True)):
        sampler_cfg = replace(rc.sampler, leakage_filter=leak)
        sub = os.path.join(rc.out_dir, f"leakage_{tag}")
        model, rows = trainer.train(
            splits, rc.trainer, rc.demix, sampler_cfg,
            out_dir=sub, threads=rc.threads, log=log,
        )
        curves[tag] = {row["epoch"]: row for row in rows if row["mrr"] is not None}
        if len(eval_split):
            report, _ = evaluator.evaluate(model, eval_split, filter_index, threads=rc.threads)
            finals[tag] = report

    out_path = os.path.join(rc.out_dir, "leakage_compare.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "epoch", "split",
            "mrr_normal", "hits10_normal", "mrr_leakage", "hits10_leakage",
        ])
        for epoch in sorted(set(curves["normal"]) & set(curves["leakage"])):
            a, b = curves["normal"][epoch], curves["leakage"][epoch]
            writer.writerow([
                epoch, "valid",
                f"{a['mrr']:.6f}", f"{a['hits10']:.6f}",
                f"{b['mrr']:.6f}", f"{b['hits10']:.6f}",
            ])
        if finals:
            writer.writerow([
                rc.trainer.epochs, eval_name,
                f"{finals['normal'].mrr:.6f}", f"{finals['normal'].hits10:.6f}",
                f"{finals['leakage'].mrr:.6f}", f"{finals['leakage'].hits10:.6f}",
            ])
    if finals:
        print(
            f"final {eval_name} mrr: normal={finals['normal'].mrr:.4f} "
            f"leakage={finals['leakage'].mrr:.4f}"
        )
    print(f"wrote {out_path}")
    return 0


def _diag_export(args, rc: RunConfig) -> int:
    if args.checkpoint is None:
        raise ConfigError("export_embeddings needs --checkpoint")
    if rc.out_dir is None:
        raise ConfigError("export_embeddings needs output.dir")
    if not os.path.isfile(args.checkpoint):
        raise ConfigError(f"no such checkpoint: {args.checkpoint}")
    model, _ = load_checkpoint(args.checkpoint)
    os.makedirs(rc.out_dir, exist_ok=True)
    for name, table in (("entities.tsv", model.entity_table),
                        ("relations.tsv", model.relation_table)):
        path = os.path.join(rc.out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("id\t" + "\t".join(f"v{j}" for j in range(table.shape[1])) + "\n")
            for i, row in enumerate(table.tolist()):
                fh.write(f"{i}\t" + "\t".join(repr(v) for v in row) + "\n")
        print(f"wrote {path}")
    return 0


def cmd_diagnose(args) -> int:
    rc = load_run_config(args.config, args.set)
    _resolve_threads(args, rc)
    if args.mode == "export_embeddings":
        rc.validate()
        return _diag_export(args, rc)
    rc.validate(require_data=True)
    splits = _load_data(rc)
    if args.mode == "estimation_accuracy":
        return _diag_estimation(args, rc, splits)
    return _diag_leakage(args, rc, splits)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demix-kge",
        description="Knowledge graph embedding training with refined negative sampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", required=True, help="run config file")
        sp.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (falls back to DEMIX_KGE_THREADS)")
        sp.add_argument("--quiet", action="store_true", help="suppress progress lines")

    p_train = sub.add_parser("train", help="train a model")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p_eval.set_defaults(func=cmd_eval)

    p_diag = sub.add_parser("diagnose", help="run a diagnostic")
    add_common(p_diag)
    p_diag.add_argument("--mode", required=True, choices=DIAGNOSE_MODES)
    p_diag.add_argument("--checkpoint", help="checkpoint for export_embeddings")
    p_diag.add_argument("--run-dir", help="directory holding checkpoints "
                        "(estimation_accuracy; defaults to output.dir)")
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KgeError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # unexpected runtime failure, distinct from bad input
        print(f"unexpected error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
