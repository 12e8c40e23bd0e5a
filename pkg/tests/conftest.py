"""Shared fixtures and model-building helpers for the test suite."""

import numpy as np
import pytest

from demix_kge import (
    DataSplits,
    EmbeddingModel,
    TripleSet,
    Vocab,
    build_filter_index,
    build_pattern_index,
    init_model,
)


def pinned_model(kind, entity_rows, relation_rows, margin=0.0, norm_p=1):
    """Build a model with explicit float64 tables for hand-computable scores."""
    ent = np.asarray(entity_rows, dtype=np.float64)
    rel = np.asarray(relation_rows, dtype=np.float64)
    if ent.ndim == 1:
        ent = ent[:, None]
    if rel.ndim == 1:
        rel = rel[:, None]
    return EmbeddingModel(
        kind=kind,
        dim=ent.shape[1],
        margin=float(margin),
        entity_table=ent,
        relation_table=rel,
        norm_p=norm_p,
    )


def scalar_distmult(entity_values, relation_values=(1.0,)):
    """DistMult with dim=1: f(h,r,t) = h*r*t, so scores are plain products."""
    return pinned_model("DistMult", entity_values, relation_values)


def triples(rows):
    """TripleSet from a list of (h, r, t) tuples."""
    return TripleSet(np.asarray(rows, dtype=np.int64).reshape(-1, 3))


def vocab_of(num_entities, num_relations):
    v = Vocab()
    for i in range(num_entities):
        v.add_entity(f"e{i}")
    for j in range(num_relations):
        v.add_relation(f"r{j}")
    return v


def random_triples(rng, num_entities, num_relations, n):
    """n distinct random triples over the given id ranges."""
    seen = set()
    rows = []
    while len(rows) < n:
        h = int(rng.integers(num_entities))
        r = int(rng.integers(num_relations))
        t = int(rng.integers(num_entities))
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            rows.append((h, r, t))
    return triples(rows)


def fd_grad(fn, x, h=1e-5):
    """Central finite differences of a scalar function over a vector."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (fn(xp) - fn(xm)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["TransE", "RotatE", "DistMult", "ComplEx"])
def each_kind(request):
    return request.param


@pytest.fixture
def small_model(each_kind):
    return init_model(12, 4, 8, each_kind, margin=6.0, seed=3)


@pytest.fixture
def small_graph(rng):
    """A 12-entity, 4-relation random training set with its indexes."""
    train = random_triples(rng, 12, 4, 40)
    index = build_pattern_index(train)
    return train, index


@pytest.fixture
def tiny_splits():
    """Small deterministic splits sharing one vocab, for end-to-end tests."""
    v = vocab_of(8, 2)
    train = triples(
        [
            (0, 0, 1),
            (0, 0, 2),
            (1, 0, 2),
            (2, 0, 3),
            (3, 1, 4),
            (4, 1, 5),
            (5, 1, 6),
            (6, 0, 7),
            (7, 1, 0),
            (1, 1, 3),
            (2, 1, 5),
            (5, 0, 0),
        ]
    )
    valid = triples([(0, 0, 3), (4, 1, 6)])
    test = triples([(1, 0, 4), (3, 1, 6)])
    return DataSplits(train=train, valid=valid, test=test, vocab=v)


@pytest.fixture
def tiny_indexes(tiny_splits):
    pattern = build_pattern_index(tiny_splits.train)
    filt = build_filter_index(tiny_splits.train, tiny_splits.valid, tiny_splits.test)
    return pattern, filt
