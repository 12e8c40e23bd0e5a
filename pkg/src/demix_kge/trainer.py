"""Losses, sparse Adam, and the training loop.

The loop runs a warm-up phase of plain corruption sampling with hard zero
labels, then switches to refining every batch's corruptions into mixed
triples with soft labels. Only embedding rows touched by a batch update
their Adam moments; bias correction uses one global step counter.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from . import evaluator
from .demix import DemixConfig, build_cap_pool, refine_batch
from .errors import ConfigError
from .kg_store import HEAD, TAIL, DataSplits, build_filter_index, build_pattern_index
from .sampler import (
    NegSampleBatch,
    SamplerConfig,
    SamplerStats,
    bernoulli_stats,
    sample_corruptions,
)
from .scoring import (
    EmbeddingModel,
    GradSink,
    grad_batch,
    grad_swap_batch,
    init_model,
    save_checkpoint,
    score_batch,
    score_swap_batch,
)
from .seeds import rng_for

LOSSES = ("uniform", "self_adversarial")

METRICS_COLUMNS = ("epoch", "split", "mrr", "hits1", "hits3", "hits10", "loss", "wall_clock_s")


def softplus(x):
    """log(1 + exp(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce(score, label):
    """Cross-entropy of sigmoid(score) against a soft label.

    Evaluates y*softplus(-s) + (1-y)*softplus(s), which equals
    -[y*log(sigmoid(s)) + (1-y)*log(1-sigmoid(s))] but stays finite for
    scores far outside the sigmoid's comfortable range. Elementwise on
    arrays; d/ds is sigmoid(s) - y.
    """
    score = np.asarray(score, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    return label * softplus(-score) + (1.0 - label) * softplus(score)


def _rowwise_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def loss_uniform(pos_score: float, mixed_scores, soft_labels) -> float:
    """Positive term plus unweighted mixed-negative terms."""
    total = float(bce(pos_score, 1.0))
    mixed_scores = np.asarray(mixed_scores, dtype=np.float64)
    if mixed_scores.size:
        total += float(np.sum(bce(mixed_scores, soft_labels)))
    return total


def loss_self_adv(pos_score: float, mixed_scores, soft_labels, temperature: float) -> float:
    """Positive term plus softmax-weighted mixed-negative terms.

    Weights are softmax(temperature * scores) over this positive's mixed
    triples and act as constants (no gradient flows through them).
    """
    total = float(bce(pos_score, 1.0))
    mixed_scores = np.asarray(mixed_scores, dtype=np.float64)
    if mixed_scores.size:
        w = _rowwise_softmax(temperature * mixed_scores[None, :])[0]
        total += float(np.sum(w * bce(mixed_scores, soft_labels)))
    return total


@dataclass
class AdamState:
    """Moment tables mirroring the parameter tables, plus one step counter."""

    m_ent: np.ndarray
    v_ent: np.ndarray
    m_rel: np.ndarray
    v_rel: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: EmbeddingModel) -> "AdamState":
        return cls(
            m_ent=np.zeros_like(model.entity_table),
            v_ent=np.zeros_like(model.entity_table),
            m_rel=np.zeros_like(model.relation_table),
            v_rel=np.zeros_like(model.relation_table),
        )


def _update_rows(param, m, v, grads: dict, lr, b1, b2, eps, bc1, bc2):
    if not grads:
        return
    # Sorted rows make the float op order independent of accumulation order.
    ids = np.array(sorted(grads.keys()), dtype=np.int64)
    g = np.stack([grads[int(i)] for i in ids])
    m[ids] = b1 * m[ids] + (1.0 - b1) * g
    v[ids] = b2 * v[ids] + (1.0 - b2) * (g * g)
    m_hat = m[ids] / bc1
    v_hat = v[ids] / bc2
    param[ids] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step(model: EmbeddingModel, grads: GradSink, state: AdamState, lr: float):
    """Apply one sparse Adam update for the rows present in the sink."""
    bad_ent = [row for row, g in grads.ent.items() if not np.isfinite(g).all()]
    bad_rel = [row for row, g in grads.rel.items() if not np.isfinite(g).all()]
    if bad_ent or bad_rel:
        raise FloatingPointError(
            f"non-finite gradients at step {state.step + 1}: "
            f"entity rows {sorted(bad_ent)[:8]}, relation rows {sorted(bad_rel)[:8]}"
        )
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    _update_rows(
        model.entity_table, state.m_ent, state.v_ent, grads.ent,
        lr, state.beta1, state.beta2, state.eps, bc1, bc2,
    )
    _update_rows(
        model.relation_table, state.m_rel, state.v_rel, grads.rel,
        lr, state.beta1, state.beta2, state.eps, bc1, bc2,
    )


@dataclass
class TrainConfig:
    kind: str = "TransE"
    dim: int = 200
    margin: float = 9.0
    norm: int | None = None
    epochs: int = 48
    warmup_epochs: int = 8
    batch_size: int = 256
    learning_rate: float = 1e-4
    negatives: int = 16
    loss: str = "self_adversarial"
    temperature: float = 1.0
    l3_reg: float = 0.0
    seed: int = 0
    checkpoint_every: int = 8
    eval_every: int = 1

    def validate(self):
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError(
                f"need epochs >= warmup_epochs >= 0, got {self.epochs} and {self.warmup_epochs}"
            )
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.negatives < 1:
            raise ConfigError(f"negatives must be >= 1, got {self.negatives}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.l3_reg < 0:
            raise ConfigError(f"l3_reg must be >= 0, got {self.l3_reg}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")


def _train_batch(
    model, pos, cfg, sampler_cfg, demix_cfg, train_index, filter_index,
    bern, pool, demix_on, epoch_t, sampler_rng, demix_rng, sampler_stats,
):
    """One optimization step's loss and gradient sink for a positive batch."""
    n = len(pos)
    m = cfg.negatives
    sides = np.empty(n, dtype=np.int64)
    negs = np.empty((n, m), dtype=np.int64)
    for i in range(n):
        nb = sample_corruptions(
            (int(pos[i, 0]), int(pos[i, 1]), int(pos[i, 2])),
            sampler_cfg, train_index, model.num_entities, sampler_rng,
            filter_index=filter_index, bern=bern, stats=sampler_stats,
        )
        sides[i] = nb.side
        negs[i] = nb.entities

    hh = np.repeat(pos[:, 0], m)
    rr = np.repeat(pos[:, 1], m)
    tt = np.repeat(pos[:, 2], m)
    flat = negs.reshape(-1)
    tail_rows = np.repeat(sides == TAIL, m)
    h_flat = np.where(tail_rows, hh, flat)
    t_flat = np.where(tail_rows, flat, tt)

    neg_scores = score_batch(model, h_flat, rr, t_flat)
    pos_scores = score_batch(model, pos[:, 0], pos[:, 1], pos[:, 2])
    sink = GradSink()

    if demix_on:
        stats_cache: dict = {}
        mixed = []
        for i in range(n):
            nb = NegSampleBatch(side=int(sides[i]), entities=negs[i])
            mixed.extend(
                refine_batch(
                    (int(pos[i, 0]), int(pos[i, 1]), int(pos[i, 2])),
                    nb, model, train_index, pool, epoch_t, demix_cfg, demix_rng,
                    neg_scores=neg_scores[i * m : (i + 1) * m],
                    stats_cache=stats_cache,
                )
            )
        vecs = np.stack([mt.vector for mt in mixed])
        labels = np.array([mt.soft_label for mt in mixed])
        lam = np.array([mt.lambda_p for mt in mixed])
        src = np.array([mt.source_entity for mt in mixed], dtype=np.int64)
        par = np.array([mt.partner_entity for mt in mixed], dtype=np.int64)
        anchors = np.where(tail_rows, hh, tt)
        row_sides = np.repeat(sides, m)

        s_hat = np.empty(n * m)
        for side in (HEAD, TAIL):
            grp = np.nonzero(row_sides == side)[0]
            if len(grp):
                s_hat[grp] = score_swap_batch(model, anchors[grp], rr[grp], vecs[grp], side)

        if cfg.loss == "self_adversarial":
            w = _rowwise_softmax(cfg.temperature * s_hat.reshape(n, m)).reshape(-1)
        else:
            w = np.ones(n * m)
        neg_loss = float(np.sum(w * bce(s_hat, labels)))
        up_neg = w * (sigmoid(s_hat) - labels)

        for side in (HEAD, TAIL):
            grp = np.nonzero(row_sides == side)[0]
            if len(grp):
                g_vec = grad_swap_batch(
                    model, anchors[grp], rr[grp], vecs[grp], side, up_neg[grp], sink
                )
                sink.add_entity_batch(src[grp], g_vec * lam[grp][:, None])
                sink.add_entity_batch(par[grp], g_vec * (1.0 - lam[grp])[:, None])
    else:
        if cfg.loss == "self_adversarial":
            w = _rowwise_softmax(cfg.temperature * neg_scores.reshape(n, m)).reshape(-1)
        else:
            w = np.ones(n * m)
        neg_loss = float(np.sum(w * bce(neg_scores, 0.0)))
        up_neg = w * sigmoid(neg_scores)
        grad_batch(model, h_flat, rr, t_flat, up_neg, sink)

    up_pos = sigmoid(pos_scores) - 1.0
    grad_batch(model, pos[:, 0], pos[:, 1], pos[:, 2], up_pos, sink)
    loss_sum = float(np.sum(bce(pos_scores, 1.0))) + neg_loss

    if cfg.l3_reg > 0:
        rows = np.unique(np.concatenate([pos[:, 0], pos[:, 2]]))
        ent = model.entity_table[rows]
        loss_sum += cfg.l3_reg * float(np.sum(np.abs(ent) ** 3))
        sink.add_entity_batch(rows, 3.0 * cfg.l3_reg * ent * ent * np.sign(ent))
    return loss_sum, sink


def train(
    data: DataSplits,
    train_cfg: TrainConfig,
    demix_cfg: DemixConfig | None = None,
    sampler_cfg: SamplerConfig | None = None,
    out_dir=None,
    threads: int = 1,
    log=None,
) -> tuple[EmbeddingModel, list[dict]]:
    """Run the full training loop.

    Warm-up epochs sample corruptions with zero labels; afterwards, when
    the strategy is "demix", every batch's corruptions are refined into
    mixed triples before the loss sees them. The corruption-partner pool
    is rebuilt at each refined epoch's start. Emits one metrics row per
    epoch (validation metrics at eval_every cadence) and, when out_dir is
    set, periodic/best/final checkpoints plus metrics.csv. Single-threaded
    runs with a fixed seed are bytewise reproducible; thread fan-out only
    affects evaluation.

    Returns:
        (trained model, list of metrics rows as dicts).
    """
    train_cfg.validate()
    if sampler_cfg is None:
        sampler_cfg = SamplerConfig(
            strategy="demix",
            negatives=train_cfg.negatives,
            temperature=train_cfg.temperature,
        )
    sampler_cfg.validate()
    if demix_cfg is None:
        demix_cfg = DemixConfig(
            t0=max(1, train_cfg.warmup_epochs),
            warmup_epochs=train_cfg.warmup_epochs,
        )
    demix_cfg.validate()
    if sampler_cfg.negatives != train_cfg.negatives:
        raise ConfigError(
            f"sampler negatives {sampler_cfg.negatives} != trainer negatives "
            f"{train_cfg.negatives}"
        )
    if sampler_cfg.temperature != train_cfg.temperature:
        raise ConfigError(
            f"sampler temperature {sampler_cfg.temperature} != trainer temperature "
            f"{train_cfg.temperature}"
        )
    if demix_cfg.warmup_epochs != train_cfg.warmup_epochs:
        raise ConfigError(
            f"demix warmup_epochs {demix_cfg.warmup_epochs} != trainer warmup_epochs "
            f"{train_cfg.warmup_epochs}"
        )

    train_arr = data.train.triples
    if len(train_arr) == 0:
        raise ConfigError("training split is empty")
    train_index = build_pattern_index(data.train)
    filter_index = build_filter_index(data.train, data.valid, data.test)
    bern = bernoulli_stats(data.train) if sampler_cfg.strategy == "bernoulli" else None

    model = init_model(
        num_entities=data.vocab.num_entities,
        num_relations=data.vocab.num_relations,
        dim=train_cfg.dim,
        kind=train_cfg.kind,
        margin=train_cfg.margin,
        seed=rng_for(train_cfg.seed, "init"),
        norm_p=train_cfg.norm,
    )
    adam = AdamState.for_model(model)
    shuffle_rng = rng_for(train_cfg.seed, "shuffle")
    sampler_rng = rng_for(train_cfg.seed, "sampler")
    demix_rng = rng_for(train_cfg.seed, "demix")
    sampler_stats = SamplerStats()

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    w = train_cfg.warmup_epochs
    rows: list[dict] = []
    best_mrr = -np.inf
    t0 = time.monotonic()

    for e in range(train_cfg.epochs):
        epoch = e + 1
        demix_on = sampler_cfg.strategy == "demix" and e >= w
        pool = build_cap_pool(model, train_index) if demix_on else None
        epoch_t = e - w

        order = shuffle_rng.permutation(len(train_arr))
        total_loss = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            pos = train_arr[order[start : start + train_cfg.batch_size]]
            loss_sum, sink = _train_batch(
                model, pos, train_cfg, sampler_cfg, demix_cfg, train_index,
                filter_index, bern, pool, demix_on, epoch_t,
                sampler_rng, demix_rng, sampler_stats,
            )
            if not np.isfinite(loss_sum):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            total_loss += loss_sum
            adam_step(model, sink, adam, train_cfg.learning_rate)
        mean_loss = total_loss / len(train_arr)

        eval_now = len(data.valid) > 0 and (
            epoch % train_cfg.eval_every == 0 or epoch == train_cfg.epochs
        )
        row = {
            "epoch": epoch,
            "split": "valid" if eval_now else "train",
            "mrr": None, "hits1": None, "hits3": None, "hits10": None,
            "loss": mean_loss,
            "wall_clock_s": time.monotonic() - t0,
        }
        if eval_now:
            report, _ = evaluator.evaluate(model, data.valid, filter_index, threads=threads)
            row.update(mrr=report.mrr, hits1=report.hits1,
                       hits3=report.hits3, hits10=report.hits10)
            if report.mrr > best_mrr:
                best_mrr = report.mrr
                if out_dir is not None:
                    save_checkpoint(model, os.path.join(out_dir, "checkpoint-best.ckpt"), epoch)
        rows.append(row)
        if log is not None:
            mrr_s = f" valid_mrr={row['mrr']:.4f}" if row["mrr"] is not None else ""
            log(f"epoch {epoch}/{train_cfg.epochs} loss={mean_loss:.4f}{mrr_s}")

        if (
            out_dir is not None
            and train_cfg.checkpoint_every > 0
            and epoch % train_cfg.checkpoint_every == 0
        ):
            save_checkpoint(
                model, os.path.join(out_dir, f"checkpoint-{epoch:04d}.ckpt"), epoch
            )

    if out_dir is not None:
        save_checkpoint(model, os.path.join(out_dir, "checkpoint-final.ckpt"), train_cfg.epochs)
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
    if log is not None and sampler_stats.fallbacks:
        log(f"sampler fell back to unchecked draws for {sampler_stats.fallbacks} positives")
    return model, rows


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def write_metrics_csv(path, rows: list[dict]):
    """Write metric rows with the fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([
                row["epoch"], row["split"],
                _fmt(row["mrr"]), _fmt(row["hits1"]),
                _fmt(row["hits3"]), _fmt(row["hits10"]),
                _fmt(row["loss"]), f"{row['wall_clock_s']:.3f}",
            ])


def read_metrics_csv(path) -> list[dict]:
    """Inverse of write_metrics_csv; blank cells come back as None."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append({
                "epoch": int(rec["epoch"]),
                "split": rec["split"],
                "mrr": float(rec["mrr"]) if rec["mrr"] else None,
                "hits1": float(rec["hits1"]) if rec["hits1"] else None,
                "hits3": float(rec["hits3"]) if rec["hits3"] else None,
                "hits10": float(rec["hits10"]) if rec["hits10"] else None,
                "loss": float(rec["loss"]) if rec["loss"] else None,
                "wall_clock_s": float(rec["wall_clock_s"]),
            })
    return out
