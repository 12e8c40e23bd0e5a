"""Refining corrupted triples: marginal pseudo-negative estimation plus
adaptive mixup.

Corrupted triples scoring between roughly the weakest and the average
same-pattern positive are suspected false negatives ("marginal
pseudo-negatives"). Instead of relabeling them outright, each corruption is
mixed in embedding space with a partner: suspected false negatives with a
boundary positive of the same pattern (yielding a partially-positive soft
label), clear negatives with one another (yielding harder negatives). The
lower interval edge widens over epochs as the model's judgment firms up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kg_store import HEAD, TAIL, PatternIndex
from .scoring import EmbeddingModel, score_batch

# Patterns with more positives than this have their score statistics taken
# over a uniform subsample, to bound the per-batch cost of 1-N patterns.
STATS_SAMPLE_CAP = 1024


@dataclass
class DemixConfig:
    """Knobs of the estimator and the mixup.

    delta/beta/t0 drive the widening schedule of the estimation interval,
    mu gates estimation off for rarely-seen patterns, alpha parameterizes
    the Beta draw of the mixing coefficient, and warmup_epochs is how long
    plain sampling runs before refinement engages.
    """

    delta: float = 0.1
    beta: float = 3.0
    t0: int = 8
    mu: int = 3
    alpha: float = 1.0
    warmup_epochs: int = 8

    def validate(self):
        if self.delta < 0:
            raise ConfigError(f"demix.delta must be >= 0, got {self.delta}")
        if self.beta <= 0:
            raise ConfigError(f"demix.beta must be > 0, got {self.beta}")
        if self.t0 < 1:
            raise ConfigError(f"demix.t0 must be >= 1, got {self.t0}")
        if self.mu < 1:
            raise ConfigError(f"demix.mu must be >= 1, got {self.mu}")
        if self.alpha <= 0:
            raise ConfigError(f"demix.alpha must be > 0, got {self.alpha}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"demix.warmup_epochs must be >= 0, got {self.warmup_epochs}")


@dataclass
class PatternStats:
    """Min/mean score of the positives sharing one pattern."""

    key: int
    score_min: float
    score_mean: float
    count: int


@dataclass
class MpnPartition:
    """Index split of one corruption list into suspected false negatives
    (mpn) and true negatives."""

    mpn: np.ndarray
    true_neg: np.ndarray

    @property
    def size(self) -> int:
        return len(self.mpn) + len(self.true_neg)


@dataclass
class MixedTriple:
    """One refined corruption: a synthesized entity vector plus soft label.

    The vector is lambda_p * (source entity) + (1 - lambda_p) * (partner
    entity); gradients on it are routed back to the two source rows with
    those same coefficients.
    """

    side: int
    pattern_key: int
    vector: np.ndarray
    soft_label: float
    source_index: int
    source_entity: int
    partner_entity: int
    lambda_p: float


class CapPool:
    """Per-pattern boundary positives: the entity in the corrupted slot of
    every positive scoring at or below its pattern's mean.

    The minimum-scoring positive always qualifies, so each indexed pattern
    has a nonempty pool. Rebuilt once per epoch; membership may go stale as
    embeddings move within the epoch, which is accepted.
    """

    def __init__(self, hr: dict[int, np.ndarray], rt: dict[int, np.ndarray]):
        self._tables = {TAIL: hr, HEAD: rt}

    def get(self, side: int, key: int) -> np.ndarray | None:
        return self._tables[side].get(key)

    def num_patterns(self) -> int:
        return sum(len(t) for t in self._tables.values())


def delta_at_epoch(epoch_t: int, config: DemixConfig) -> float:
    """Interval widening at post-warm-up epoch T: delta * min(beta, T/T0)."""
    return config.delta * min(config.beta, epoch_t / config.t0)


def _pattern_triples(side: int, key: int, entities: np.ndarray):
    """id arrays (h, r, t) of the positives with this pattern."""
    a, b = key >> 32, key & 0xFFFFFFFF
    anchor = np.full(len(entities), a if side == TAIL else b, dtype=np.int64)
    rels = np.full(len(entities), b if side == TAIL else a, dtype=np.int64)
    if side == TAIL:
        return anchor, rels, entities
    return entities, rels, anchor


def pattern_stats(
    model: EmbeddingModel,
    side: int,
    key: int,
    index: PatternIndex,
    rng: np.random.Generator | None = None,
    sample_cap: int | None = STATS_SAMPLE_CAP,
) -> PatternStats | None:
    """Current-model score min/mean over the positives of one pattern.

    Returns None when the pattern is absent from the index (the caller
    skips estimation). Statistics come from a uniform subsample when the
    pattern exceeds sample_cap and an rng is supplied.
    """
    entities = index.entities(side, key)
    if entities is None:
        return None
    count = len(entities)
    if sample_cap is not None and rng is not None and count > sample_cap:
        entities = rng.choice(entities, size=sample_cap, replace=False)
    h, r, t = _pattern_triples(side, key, np.asarray(entities, dtype=np.int64))
    scores = score_batch(model, h, r, t)
    return PatternStats(
        key=key,
        score_min=float(scores.min()),
        score_mean=float(scores.mean()),
        count=count,
    )


def estimate_mpn(
    neg_scores: np.ndarray,
    stats: PatternStats | None,
    delta_t: float,
    mu: int,
) -> MpnPartition:
    """Split corruption indices into marginal pseudo-negatives and true
    negatives.

    Index k is a pseudo-negative iff the pattern has at least mu positives
    and score_min - delta_t <= neg_scores[k] <= score_mean; everything else
    is a true negative.
    """
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    idx = np.arange(len(neg_scores))
    if stats is None or stats.count < mu:
        return MpnPartition(mpn=idx[:0], true_neg=idx)
    mask = (neg_scores >= stats.score_min - delta_t) & (neg_scores <= stats.score_mean)
    return MpnPartition(mpn=idx[mask], true_neg=idx[~mask])


def build_cap_pool(model: EmbeddingModel, index: PatternIndex) -> CapPool:
    """Collect the boundary positives of every indexed pattern.

    Scores the whole training set once per side; pool membership is
    f(h, r, t) <= pattern mean under the current model.
    """
    tables = {}
    for side, table in ((TAIL, index.hr), (HEAD, index.rt)):
        keys = list(table.keys())
        sizes = [len(table[k]) for k in keys]
        if keys:
            all_ents = np.concatenate([table[k] for k in keys])
            h, r, t = _packed_triples(side, keys, sizes, all_ents)
            scores = score_batch(model, h, r, t)
        pools = {}
        offset = 0
        for key, size in zip(keys, sizes):
            seg = scores[offset : offset + size]
            ents = all_ents[offset : offset + size]
            pools[key] = ents[seg <= seg.mean()].copy()
            offset += size
        tables[side] = pools
    return CapPool(tables[TAIL], tables[HEAD])


def _packed_triples(side: int, keys, sizes, entities: np.ndarray):
    firsts = np.repeat(np.array([k >> 32 for k in keys], dtype=np.int64), sizes)
    seconds = np.repeat(np.array([k & 0xFFFFFFFF for k in keys], dtype=np.int64), sizes)
    if side == TAIL:
        return firsts, seconds, entities
    return seconds, firsts, entities


def select_partner(
    k: int,
    partition: MpnPartition,
    pool: CapPool,
    side: int,
    key: int,
    neg_entities: np.ndarray,
    rng: np.random.Generator,
) -> tuple[int, float]:
    """Pick the mixup partner for corruption index k.

    Pseudo-negatives draw uniformly from the pattern's boundary-positive
    pool (partner label 1); true negatives draw uniformly from this
    positive's own true-negative entities (label 0), possibly themselves.
    """
    if k in partition.mpn:
        candidates = pool.get(side, key)
        if candidates is None or len(candidates) == 0:
            raise RuntimeError(f"empty mixup pool for indexed pattern {key}")
        label = 1.0
    else:
        candidates = neg_entities[partition.true_neg]
        label = 0.0
    partner = int(candidates[rng.integers(0, len(candidates))])
    return partner, label


def mix(
    e_i: np.ndarray,
    y_i: float,
    e_j: np.ndarray,
    y_j: float,
    alpha: float,
    rng: np.random.Generator,
    *,
    side: int = -1,
    pattern_key: int = -1,
    source_index: int = -1,
    source_entity: int = -1,
    partner_entity: int = -1,
) -> MixedTriple:
    """Convex-combine two entity vectors and their labels.

    lambda is Beta(alpha, alpha) and the applied coefficient is
    max(lambda, 1 - lambda), so the mix always stays closer to e_i.
    """
    e_i = np.asarray(e_i, dtype=np.float64)
    e_j = np.asarray(e_j, dtype=np.float64)
    if e_i.shape != e_j.shape:
        raise ValueError(f"vector length mismatch: {e_i.shape} vs {e_j.shape}")
    lam = float(rng.beta(alpha, alpha))
    lam_p = max(lam, 1.0 - lam)
    return MixedTriple(
        side=side,
        pattern_key=pattern_key,
        vector=lam_p * e_i + (1.0 - lam_p) * e_j,
        soft_label=lam_p * y_i + (1.0 - lam_p) * y_j,
        source_index=source_index,
        source_entity=source_entity,
        partner_entity=partner_entity,
        lambda_p=lam_p,
    )


def refine_batch(
    positive: tuple[int, int, int],
    batch,
    model: EmbeddingModel,
    index: PatternIndex,
    pool: CapPool,
    epoch_t: int,
    config: DemixConfig,
    rng: np.random.Generator,
    neg_scores: np.ndarray | None = None,
    stats_cache: dict | None = None,
) -> list[MixedTriple]:
    """Refine one positive's corruption list into mixed triples.

    Scores the corruptions (unless the caller hands scores in), estimates
    the pseudo-negative split against same-pattern statistics, picks
    partners, and mixes. batch is a sampler.NegSampleBatch; stats_cache,
    keyed by (side, pattern key), lets a caller share pattern statistics
    across one batch of positives.
    """
    h, r, t = positive
    side = batch.side
    neg_entities = np.asarray(batch.entities, dtype=np.int64)
    key = index.key_for(side, h, r, t)

    if neg_scores is None:
        ph, pr, pt = _pattern_triples(side, key, neg_entities)
        neg_scores = score_batch(model, ph, pr, pt)

    if stats_cache is not None and (side, key) in stats_cache:
        stats = stats_cache[(side, key)]
    else:
        stats = pattern_stats(model, side, key, index, rng=rng)
        if stats_cache is not None:
            stats_cache[(side, key)] = stats

    delta_t = delta_at_epoch(epoch_t, config)
    partition = estimate_mpn(neg_scores, stats, delta_t, config.mu)
    mpn_set = set(partition.mpn.tolist())

    ent = model.entity_table
    out = []
    for k in range(len(neg_entities)):
        src = int(neg_entities[k])
        if k in mpn_set:
            pool_ents = pool.get(side, key)
            if pool_ents is None or len(pool_ents) == 0:
                raise RuntimeError(f"empty mixup pool for indexed pattern {key}")
            partner = int(pool_ents[rng.integers(0, len(pool_ents))])
            y_j = 1.0
        else:
            cands = neg_entities[partition.true_neg]
            partner = int(cands[rng.integers(0, len(cands))])
            y_j = 0.0
        out.append(
            mix(
                ent[src], 0.0, ent[partner], y_j, config.alpha, rng,
                side=side, pattern_key=key, source_index=k,
                source_entity=src, partner_entity=partner,
            )
        )
    return out
