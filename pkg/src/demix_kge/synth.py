"""Cluster-structured synthetic KGs with held-out true facts.

Entities are split into clusters; each relation maps a few source clusters
to target clusters. Heads of a source cluster share a core tail set, and
each head additionally gets a few individual tails. Holding out a fraction
of the facts plants false negatives during training: corruption sampling
can reconstruct them, and held-out core facts keep sibling evidence in
train (other heads of the cluster link to the same tail), so a model can
genuinely score them like true facts. The individual tails stay
memorization-bound and keep ranking away from its ceiling.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError
from .kg_store import DataSplits, TripleSet, Vocab


def make_synth_kg(
    num_entities: int = 200,
    num_relations: int = 12,
    num_clusters: int = 20,
    source_clusters: int = 6,
    shared_tails: int = 4,
    solo_tails: int = 2,
    holdout_frac: float = 1.0 / 3.0,
    seed: int = 7,
) -> DataSplits:
    """Generate the splits of a clustered KG.

    Every (h, r) pattern that occurs has shared_tails cluster-wide tails
    plus up to solo_tails head-specific ones, so held-out facts usually
    leave both same-pattern siblings and same-tail evidence behind. The
    holdout is split evenly into valid and test.
    """
    if num_entities % num_clusters != 0:
        raise ConfigError("num_entities must be divisible by num_clusters")
    cluster_size = num_entities // num_clusters
    if shared_tails + solo_tails > cluster_size:
        raise ConfigError("shared_tails + solo_tails cannot exceed the cluster size")
    if source_clusters > num_clusters:
        raise ConfigError("source_clusters cannot exceed num_clusters")
    if not 0.0 <= holdout_frac < 1.0:
        raise ConfigError("holdout_frac must be in [0, 1)")

    rng = np.random.default_rng(seed)
    clusters = [
        np.arange(c * cluster_size, (c + 1) * cluster_size) for c in range(num_clusters)
    ]

    # Solo draws may collide with the shared core, so build a set.
    facts = set()
    for r in range(num_relations):
        sources = rng.choice(num_clusters, size=source_clusters, replace=False)
        for src in sources:
            dst = int(rng.integers(0, num_clusters))
            core = rng.choice(clusters[dst], size=shared_tails, replace=False)
            for h in clusters[src]:
                for t in core:
                    facts.add((int(h), r, int(t)))
                solos = rng.choice(clusters[dst], size=solo_tails, replace=False)
                for t in solos:
                    facts.add((int(h), r, int(t)))

    arr = np.array(sorted(facts), dtype=np.int64)
    arr = arr[rng.permutation(len(arr))]
    n_hold = int(round(holdout_frac * len(arr)))
    n_valid = n_hold // 2
    valid = arr[:n_valid]
    test = arr[n_valid:n_hold]
    train = arr[n_hold:]

    vocab = Vocab()
    for e in range(num_entities):
        vocab.add_entity(f"e{e}")
    for r in range(num_relations):
        vocab.add_relation(f"r{r}")
    return DataSplits(
        train=TripleSet(train),
        valid=TripleSet(valid),
        test=TripleSet(test),
        vocab=vocab,
    )


def write_split(path, triples: TripleSet, vocab: Vocab):
    """Write one split as head<TAB>relation<TAB>tail names."""
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in triples:
            fh.write(
                f"{vocab.entity_names[h]}\t{vocab.relation_names[r]}\t{vocab.entity_names[t]}\n"
            )


def write_dataset(out_dir, splits: DataSplits) -> dict[str, str]:
    """Write train/valid/test files plus id dictionaries; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, triples in (("train", splits.train), ("valid", splits.valid), ("test", splits.test)):
        path = os.path.join(out_dir, f"{name}.txt")
        write_split(path, triples, splits.vocab)
        paths[name] = path
    ent_path = os.path.join(out_dir, "entities.dict")
    with open(ent_path, "w", encoding="utf-8") as fh:
        for i, name in enumerate(splits.vocab.entity_names):
            fh.write(f"{i}\t{name}\n")
    rel_path = os.path.join(out_dir, "relations.dict")
    with open(rel_path, "w", encoding="utf-8") as fh:
        for i, name in enumerate(splits.vocab.relation_names):
            fh.write(f"{i}\t{name}\n")
    paths["entity_dict"] = ent_path
    paths["relation_dict"] = rel_path
    return paths
