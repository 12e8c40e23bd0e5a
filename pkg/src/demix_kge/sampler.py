"""Negative sampling by entity corruption.

One side (head or tail) is corrupted per positive. Draws collide against
the training facts and are rejected and redrawn; an optional leakage filter
additionally rejects corruptions that reconstruct held-out facts, which is
useful only as a diagnostic upper bound since it reads evaluation data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .kg_store import HEAD, TAIL, FilterIndex, PatternIndex, TripleSet

STRATEGIES = ("uniform", "bernoulli", "self_adversarial", "demix")

# Rejection budget per positive, as a multiple of the negative count.
REJECTION_BUDGET = 100


@dataclass
class SamplerConfig:
    strategy: str = "demix"
    negatives: int = 16
    leakage_filter: bool = False
    temperature: float = 1.0
    allow_train_collisions: bool = False

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"sampler.strategy must be one of {STRATEGIES}, got {self.strategy!r}"
            )
        if self.negatives < 1:
            raise ConfigError(f"sampler.negatives must be >= 1, got {self.negatives}")
        if self.temperature <= 0:
            raise ConfigError(f"sampler.temperature must be > 0, got {self.temperature}")


@dataclass
class NegSampleBatch:
    """Corruptions of one positive: the chosen side and the replacement
    entity ids for that slot."""

    side: int
    entities: np.ndarray


@dataclass
class SamplerStats:
    """Counters surfaced in logs; fallbacks counts positives whose
    rejection budget ran out and were filled without collision checks."""

    draws: int = 0
    rejections: int = 0
    fallbacks: int = 0


def bernoulli_stats(train: TripleSet) -> dict[int, tuple[float, float]]:
    """Per-relation (tph, hpt): mean tails per distinct head and mean heads
    per distinct tail."""
    arr = train.triples
    out: dict[int, tuple[float, float]] = {}
    for r in np.unique(arr[:, 1]):
        sub = arr[arr[:, 1] == r]
        tph = len(sub) / len(np.unique(sub[:, 0]))
        hpt = len(sub) / len(np.unique(sub[:, 2]))
        out[int(r)] = (float(tph), float(hpt))
    return out


def _choose_side(
    positive: tuple[int, int, int],
    config: SamplerConfig,
    bern: dict[int, tuple[float, float]] | None,
    rng: np.random.Generator,
) -> int:
    if config.strategy == "bernoulli":
        if bern is None:
            raise ConfigError("bernoulli strategy requires relation stats")
        tph, hpt = bern[positive[1]]
        return TAIL if rng.random() < tph / (tph + hpt) else HEAD
    return HEAD if rng.random() < 0.5 else TAIL


def sample_corruptions(
    positive: tuple[int, int, int],
    config: SamplerConfig,
    train_index: PatternIndex,
    num_entities: int,
    rng: np.random.Generator,
    filter_index: FilterIndex | None = None,
    bern: dict[int, tuple[float, float]] | None = None,
    stats: SamplerStats | None = None,
) -> NegSampleBatch:
    """Draw the corruption list for one positive.

    Uniform entity draws with rejection against training facts (and against
    all known facts when the leakage filter is on). After 100x the
    requested count of rejections the remaining slots are filled with
    unchecked draws and the fallback counter ticks.
    """
    h, r, t = positive
    side = _choose_side(positive, config, bern, rng)
    key = train_index.key_for(side, h, r, t)

    m = config.negatives
    out = np.empty(m, dtype=np.int64)
    check_train = not config.allow_train_collisions
    check_leak = config.leakage_filter
    if check_leak and filter_index is None:
        raise ConfigError("leakage_filter requires a filter over all splits")

    budget = REJECTION_BUDGET * m
    filled = 0
    while filled < m:
        e = int(rng.integers(0, num_entities))
        if stats is not None:
            stats.draws += 1
        bad = False
        if budget > 0:
            if check_train and train_index.contains(side, key, e):
                bad = True
            elif check_leak and filter_index.contains(side, key, e):
                bad = True
        if bad:
            budget -= 1
            if stats is not None:
                stats.rejections += 1
            if budget == 0 and stats is not None:
                stats.fallbacks += 1
            continue
        out[filled] = e
        filled += 1
    return NegSampleBatch(side=side, entities=out)


def self_adv_weights(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax of temperature * scores, max-subtracted for stability.

    The caller treats the weights as constants: they scale loss terms but
    receive no gradient themselves.
    """
    z = temperature * np.asarray(scores, dtype=np.float64)
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()
