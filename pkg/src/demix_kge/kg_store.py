"""Triple ingestion, vocabularies, and the pattern/filter indexes.

A corruption leaves one (entity, relation) pair of a triple untouched; that
invariant pair is the triple's *pattern*. The pattern index groups training
facts by pattern and is the backbone of both pseudo-negative estimation and
filtered evaluation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, VocabError

# Which slot of a triple gets replaced by a corruption. HEAD leaves the
# (r, t) pattern invariant, TAIL leaves (h, r).
HEAD = 0
TAIL = 1


def pack_key(a: int, b: int) -> int:
    """Pack two non-negative 32-bit ints into one 64-bit mapping key."""
    return (int(a) << 32) | int(b)


@dataclass
class Vocab:
    """Dense integer ids for entity and relation names.

    Ids are assigned in first-appearance order unless built from dictionary
    files, and round-trip name -> id -> name exactly.
    """

    entity_names: list[str] = field(default_factory=list)
    relation_names: list[str] = field(default_factory=list)
    entity_ids: dict[str, int] = field(default_factory=dict)
    relation_ids: dict[str, int] = field(default_factory=dict)

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    def add_entity(self, name: str) -> int:
        eid = self.entity_ids.get(name)
        if eid is None:
            eid = len(self.entity_names)
            self.entity_names.append(name)
            self.entity_ids[name] = eid
        return eid

    def add_relation(self, name: str) -> int:
        rid = self.relation_ids.get(name)
        if rid is None:
            rid = len(self.relation_names)
            self.relation_names.append(name)
            self.relation_ids[name] = rid
        return rid

    def entity_id(self, name: str) -> int:
        try:
            return self.entity_ids[name]
        except KeyError:
            raise VocabError(f"unknown entity name: {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self.relation_ids[name]
        except KeyError:
            raise VocabError(f"unknown relation name: {name!r}") from None


@dataclass
class TripleSet:
    """Integer-encoded facts as an (n, 3) int64 array of (h, r, t) rows."""

    triples: np.ndarray

    def __post_init__(self):
        self.triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)

    def __len__(self) -> int:
        return self.triples.shape[0]

    def __iter__(self):
        for h, r, t in self.triples:
            yield int(h), int(r), int(t)

    @classmethod
    def empty(cls) -> "TripleSet":
        return cls(np.empty((0, 3), dtype=np.int64))


@dataclass
class DataSplits:
    """The three conventional splits plus their shared vocabulary."""

    train: TripleSet
    valid: TripleSet
    test: TripleSet
    vocab: Vocab


def load_splits(
    train_path,
    valid_path=None,
    test_path=None,
    vocab: Vocab | None = None,
    on_duplicate: str = "error",
) -> DataSplits:
    """Load train (and optionally valid/test) files under one vocabulary.

    Without a prebuilt vocab, ids are assigned in first-appearance order
    over the training file; valid/test names must then resolve against it.
    """
    if vocab is None:
        train, vocab = load_triples(train_path, on_duplicate=on_duplicate)
    else:
        train, _ = load_triples(train_path, vocab=vocab, on_duplicate=on_duplicate)
    valid = TripleSet.empty()
    test = TripleSet.empty()
    if valid_path is not None:
        valid, _ = load_triples(valid_path, vocab=vocab, on_duplicate=on_duplicate)
    if test_path is not None:
        test, _ = load_triples(test_path, vocab=vocab, on_duplicate=on_duplicate)
    return DataSplits(train=train, valid=valid, test=test, vocab=vocab)


def load_triples(
    path,
    vocab: Vocab | None = None,
    on_duplicate: str = "error",
) -> tuple[TripleSet, Vocab]:
    """Read a head<TAB>relation<TAB>tail file into encoded triples.

    Args:
        path: UTF-8 text file, one triple per line, no header.
        vocab: If given, names must already exist in it (use for valid/test
            splits); otherwise a fresh vocab is built in first-appearance
            order.
        on_duplicate: "error" rejects duplicate lines, "dedup" drops them
            with a warning.

    Returns:
        (TripleSet, Vocab). The returned vocab is the argument when one was
        supplied.

    Raises:
        ParseError: a nonempty line does not have exactly three TAB fields.
        VocabError: an unknown name appears under a fixed vocab.
    """
    if on_duplicate not in ("error", "dedup"):
        raise ValueError(f"on_duplicate must be 'error' or 'dedup', got {on_duplicate!r}")
    fixed = vocab is not None
    if vocab is None:
        vocab = Vocab()

    rows = []
    seen: set[tuple[int, int, int]] = set()
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(
                    f"{path}:{lineno}: expected 3 TAB-separated fields, got {len(fields)}"
                )
            h_name, r_name, t_name = fields
            if fixed:
                h = vocab.entity_id(h_name)
                r = vocab.relation_id(r_name)
                t = vocab.entity_id(t_name)
            else:
                h = vocab.add_entity(h_name)
                r = vocab.add_relation(r_name)
                t = vocab.add_entity(t_name)
            key = (h, r, t)
            if key in seen:
                if on_duplicate == "error":
                    raise ParseError(f"{path}:{lineno}: duplicate triple {line!r}")
                dropped += 1
                continue
            seen.add(key)
            rows.append(key)

    if dropped:
        warnings.warn(f"{path}: dropped {dropped} duplicate triple(s)", stacklevel=2)
    if not rows:
        return TripleSet.empty(), vocab
    return TripleSet(np.array(rows, dtype=np.int64)), vocab


def load_dict(path) -> tuple[list[str], dict[str, int]]:
    """Read an "id<TAB>name" dictionary file; ids must be dense from 0."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"{path}:{lineno}: expected 'id<TAB>name'")
            try:
                idx = int(fields[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: id {fields[0]!r} is not an integer") from None
            pairs.append((idx, fields[1]))
    pairs.sort()
    names = [name for _, name in pairs]
    if [idx for idx, _ in pairs] != list(range(len(names))):
        raise ParseError(f"{path}: ids are not dense in [0, {len(names)})")
    if len(set(names)) != len(names):
        raise ParseError(f"{path}: duplicate names")
    return names, {name: i for i, name in enumerate(names)}


def load_vocab(entity_dict_path, relation_dict_path) -> Vocab:
    """Build a Vocab from optional entities.dict / relations.dict files."""
    ent_names, ent_ids = load_dict(entity_dict_path)
    rel_names, rel_ids = load_dict(relation_dict_path)
    return Vocab(ent_names, rel_names, ent_ids, rel_ids)


class PatternIndex:
    """Per-pattern entity lists over one triple set.

    ``hr`` maps a packed (h, r) key to the sorted tail ids of its facts;
    ``rt`` maps a packed (r, t) key to the sorted head ids. Counts are the
    list lengths. Instances are immutable after construction and safe to
    read from many threads.
    """

    def __init__(self, hr: dict[int, np.ndarray], rt: dict[int, np.ndarray]):
        self.hr = hr
        self.rt = rt

    @staticmethod
    def _group(keys: np.ndarray, values: np.ndarray) -> dict[int, np.ndarray]:
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        values = values[order]
        uniq, starts = np.unique(keys, return_index=True)
        out = {}
        bounds = list(starts[1:]) + [len(keys)]
        for key, lo, hi in zip(uniq.tolist(), starts.tolist(), bounds):
            out[key] = np.sort(values[lo:hi])
        return out

    @classmethod
    def build(cls, triples: TripleSet) -> "PatternIndex":
        arr = triples.triples
        hr_keys = (arr[:, 0] << 32) | arr[:, 1]
        rt_keys = (arr[:, 1] << 32) | arr[:, 2]
        return cls(cls._group(hr_keys, arr[:, 2]), cls._group(rt_keys, arr[:, 0]))

    def _table(self, side: int) -> dict[int, np.ndarray]:
        return self.hr if side == TAIL else self.rt

    def key_for(self, side: int, h: int, r: int, t: int) -> int:
        """Packed pattern key of the pair a corruption on ``side`` keeps."""
        return pack_key(h, r) if side == TAIL else pack_key(r, t)

    def entities(self, side: int, key: int) -> np.ndarray | None:
        """Sorted ids occupying the corrupted slot, or None if unindexed."""
        return self._table(side).get(key)

    def count(self, side: int, key: int) -> int:
        ents = self._table(side).get(key)
        return 0 if ents is None else len(ents)

    def contains(self, side: int, key: int, entity: int) -> bool:
        """True iff placing ``entity`` in the corrupted slot forms a fact."""
        ents = self._table(side).get(key)
        if ents is None:
            return False
        pos = np.searchsorted(ents, entity)
        return pos < len(ents) and ents[pos] == entity

    def num_patterns(self) -> int:
        return len(self.hr) + len(self.rt)

    def flatten(self) -> np.ndarray:
        """Reconstruct the (n, 3) triple array from the hr table."""
        rows = []
        for key, tails in self.hr.items():
            h, r = key >> 32, key & 0xFFFFFFFF
            for t in tails.tolist():
                rows.append((h, r, t))
        if not rows:
            return np.empty((0, 3), dtype=np.int64)
        return np.array(sorted(rows), dtype=np.int64)


def build_pattern_index(train: TripleSet) -> PatternIndex:
    """Group the training set by its (h, r) and (r, t) patterns."""
    return PatternIndex.build(train)


class FilterIndex(PatternIndex):
    """PatternIndex over train + valid + test, for filtered evaluation and
    leakage-free sampling. Membership queries are exact."""


def build_filter_index(train: TripleSet, valid: TripleSet, test: TripleSet) -> FilterIndex:
    """Index the union of all three splits."""
    arr = np.concatenate([train.triples, valid.triples, test.triples], axis=0)
    arr = np.unique(arr, axis=0) if len(arr) else arr
    idx = PatternIndex.build(TripleSet(arr))
    return FilterIndex(idx.hr, idx.rt)
