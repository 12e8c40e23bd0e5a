"""Embedding tables, score functions, and exact analytic gradients.

Four score kinds are supported. TransE and RotatE are distance-based
(higher margin-minus-distance is better); DistMult and ComplEx are
similarity-based. RotatE relations are stored as phase angles so rotation
coefficients stay on the unit circle by construction, and the gradient is
taken with respect to the angle itself.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ParseError

KINDS = ("TransE", "RotatE", "DistMult", "ComplEx")
DISTANCE_KINDS = ("TransE", "RotatE")
_KIND_CODE = {
    "TransE": kernels.TRANSE,
    "RotatE": kernels.ROTATE,
    "DistMult": kernels.DISTMULT,
    "ComplEx": kernels.COMPLEX,
}
_EVEN_DIM_KINDS = ("RotatE", "ComplEx")

CHECKPOINT_MAGIC = "DEMIXKGE1"


def relation_dim(kind: str, dim: int) -> int:
    return dim // 2 if kind == "RotatE" else dim


@dataclass
class EmbeddingModel:
    """Entity/relation parameter tables plus score-function kind and margin."""

    kind: str
    dim: int
    margin: float
    entity_table: np.ndarray
    relation_table: np.ndarray
    norm_p: int = 1

    @property
    def num_entities(self) -> int:
        return self.entity_table.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation_table.shape[0]

    @property
    def kind_code(self) -> int:
        return _KIND_CODE[self.kind]

    def check_entity(self, e: int):
        if not 0 <= e < self.num_entities:
            raise IndexError(f"entity id {e} out of range [0, {self.num_entities})")

    def check_relation(self, r: int):
        if not 0 <= r < self.num_relations:
            raise IndexError(f"relation id {r} out of range [0, {self.num_relations})")


def init_model(
    num_entities: int,
    num_relations: int,
    dim: int,
    kind: str,
    margin: float,
    seed,
    norm_p: int | None = None,
) -> EmbeddingModel:
    """Create a model with uniformly initialized tables.

    Distance-based kinds draw from [-b, b] with b = (margin + 2) / dim,
    similarity-based from b = 1 / sqrt(dim); RotatE phases are uniform in
    [-pi, pi]. Entity rows are drawn before relation rows, so a fixed seed
    reproduces the tables bitwise.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown score kind {kind!r}; expected one of {KINDS}")
    if dim <= 0:
        raise ConfigError(f"dim must be positive, got {dim}")
    if kind in _EVEN_DIM_KINDS and dim % 2 != 0:
        raise ConfigError(f"{kind} needs an even dim, got {dim}")
    if norm_p is None:
        norm_p = 1 if kind == "TransE" else 2
    if norm_p not in (1, 2):
        raise ConfigError(f"norm_p must be 1 or 2, got {norm_p}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if kind in DISTANCE_KINDS:
        bound = (margin + 2.0) / dim
    else:
        bound = 1.0 / math.sqrt(dim)
    d_r = relation_dim(kind, dim)
    ent = rng.uniform(-bound, bound, size=(num_entities, dim))
    if kind == "RotatE":
        rel = rng.uniform(-math.pi, math.pi, size=(num_relations, d_r))
    else:
        rel = rng.uniform(-bound, bound, size=(num_relations, d_r))
    return EmbeddingModel(
        kind=kind,
        dim=dim,
        margin=float(margin),
        entity_table=np.ascontiguousarray(ent),
        relation_table=np.ascontiguousarray(rel),
        norm_p=norm_p,
    )


def score(model: EmbeddingModel, h: int, r: int, t: int) -> float:
    """Plausibility of one triple; higher is better for every kind."""
    model.check_entity(h)
    model.check_relation(r)
    model.check_entity(t)
    out = np.empty(1)
    kernels.score_into(
        model.kind_code, model.norm_p, model.margin,
        model.entity_table, model.relation_table,
        np.array([h], dtype=np.int64), np.array([r], dtype=np.int64),
        np.array([t], dtype=np.int64), out,
    )
    return float(out[0])


def score_batch(model: EmbeddingModel, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    h = np.ascontiguousarray(h, dtype=np.int64)
    r = np.ascontiguousarray(r, dtype=np.int64)
    t = np.ascontiguousarray(t, dtype=np.int64)
    out = np.empty(len(h))
    kernels.score_into(
        model.kind_code, model.norm_p, model.margin,
        model.entity_table, model.relation_table, h, r, t, out,
    )
    return out


def score_swap_batch(
    model: EmbeddingModel, anchor: np.ndarray, r: np.ndarray, vecs: np.ndarray, side: int
) -> np.ndarray:
    """Score triples whose corrupted slot holds explicit entity vectors.

    side 0 replaces heads (anchors are tail ids), side 1 replaces tails.
    """
    anchor = np.ascontiguousarray(anchor, dtype=np.int64)
    r = np.ascontiguousarray(r, dtype=np.int64)
    vecs = np.ascontiguousarray(vecs, dtype=np.float64)
    out = np.empty(len(anchor))
    kernels.score_swap_into(
        model.kind_code, model.norm_p, model.margin,
        model.entity_table, model.relation_table, anchor, r, vecs, side, out,
    )
    return out


def score_candidates(model: EmbeddingModel, anchor: int, r: int, side: int) -> np.ndarray:
    """Score every entity as the candidate filling the corrupted slot."""
    out = np.empty(model.num_entities)
    kernels.score_all_into(
        model.kind_code, model.norm_p, model.margin,
        model.entity_table, model.relation_table, anchor, r, side, out,
    )
    return out


class GradSink:
    """Sparse gradient accumulator keyed by table row.

    Rows never touched stay absent. Accumulation is additive, and sinks
    merge associatively so per-worker sinks can be reduced.
    """

    def __init__(self):
        self.ent: dict[int, np.ndarray] = {}
        self.rel: dict[int, np.ndarray] = {}

    def _add(self, table: dict, row: int, vec: np.ndarray):
        cur = table.get(row)
        if cur is None:
            table[row] = vec.astype(np.float64, copy=True)
        else:
            cur += vec

    def add_entity(self, row: int, vec: np.ndarray):
        self._add(self.ent, int(row), vec)

    def add_relation(self, row: int, vec: np.ndarray):
        self._add(self.rel, int(row), vec)

    def _add_batch(self, table: dict, ids: np.ndarray, vecs: np.ndarray):
        uniq, inv = np.unique(ids, return_inverse=True)
        acc = np.zeros((len(uniq), vecs.shape[1]))
        np.add.at(acc, inv, vecs)
        for row, vec in zip(uniq.tolist(), acc):
            self._add(table, row, vec)

    def add_entity_batch(self, ids: np.ndarray, vecs: np.ndarray):
        self._add_batch(self.ent, ids, vecs)

    def add_relation_batch(self, ids: np.ndarray, vecs: np.ndarray):
        self._add_batch(self.rel, ids, vecs)

    def merge(self, other: "GradSink"):
        for row, vec in other.ent.items():
            self._add(self.ent, row, vec)
        for row, vec in other.rel.items():
            self._add(self.rel, row, vec)

    def is_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.ent.values()) and all(
            np.isfinite(v).all() for v in self.rel.values()
        )


def score_and_grad(
    model: EmbeddingModel,
    h: int,
    r: int,
    t: int,
    upstream: float,
    sink: GradSink,
    head_vec: np.ndarray | None = None,
    tail_vec: np.ndarray | None = None,
):
    """Score one triple and accumulate upstream-scaled gradients.

    When head_vec or tail_vec is given, that explicit vector takes the
    place of the table row (the mixed-entity case); its gradient is
    returned instead of accumulated, and the caller routes it. Everything
    else goes into the sink. A zero upstream leaves the sink untouched.

    Returns:
        (score, grad_wrt_vec or None)
    """
    if not np.isfinite(upstream):
        raise ValueError(f"non-finite upstream {upstream}")
    if head_vec is not None and tail_vec is not None:
        raise ValueError("at most one of head_vec/tail_vec may be supplied")
    model.check_relation(r)
    code, norm_p, gamma = model.kind_code, model.norm_p, model.margin
    ent, rel = model.entity_table, model.relation_table
    d, d_r = model.dim, rel.shape[1]
    r_arr = np.array([r], dtype=np.int64)
    up = np.array([float(upstream)])
    g_r = np.empty((1, d_r))
    out = np.empty(1)

    if head_vec is None and tail_vec is None:
        model.check_entity(h)
        model.check_entity(t)
        h_arr = np.array([h], dtype=np.int64)
        t_arr = np.array([t], dtype=np.int64)
        kernels.score_into(code, norm_p, gamma, ent, rel, h_arr, r_arr, t_arr, out)
        if upstream != 0.0:
            gh = np.empty((1, d))
            gt = np.empty((1, d))
            kernels.grad_into(code, norm_p, gamma, ent, rel, h_arr, r_arr, t_arr, up, gh, g_r, gt)
            sink.add_entity(h, gh[0])
            sink.add_entity(t, gt[0])
            sink.add_relation(r, g_r[0])
        return float(out[0]), None

    side = 0 if head_vec is not None else 1
    vec = head_vec if head_vec is not None else tail_vec
    vec = np.ascontiguousarray(vec, dtype=np.float64).reshape(1, -1)
    if vec.shape[1] != d:
        raise ValueError(f"entity vector length {vec.shape[1]} != dim {d}")
    anchor = t if side == 0 else h
    model.check_entity(anchor)
    a_arr = np.array([anchor], dtype=np.int64)
    kernels.score_swap_into(code, norm_p, gamma, ent, rel, a_arr, r_arr, vec, side, out)
    g_vec = np.zeros((1, d))
    if upstream != 0.0:
        g_anchor = np.empty((1, d))
        kernels.grad_swap_into(
            code, norm_p, gamma, ent, rel, a_arr, r_arr, vec, side, up, g_anchor, g_r, g_vec
        )
        sink.add_entity(anchor, g_anchor[0])
        sink.add_relation(r, g_r[0])
    return float(out[0]), g_vec[0]


def grad_batch(
    model: EmbeddingModel,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    upstream: np.ndarray,
    sink: GradSink,
):
    """Accumulate upstream-scaled gradients for a batch of id triples."""
    h = np.ascontiguousarray(h, dtype=np.int64)
    r = np.ascontiguousarray(r, dtype=np.int64)
    t = np.ascontiguousarray(t, dtype=np.int64)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    n, d, d_r = len(h), model.dim, model.relation_table.shape[1]
    gh = np.empty((n, d))
    gt = np.empty((n, d))
    g_r = np.empty((n, d_r))
    kernels.grad_into(
        model.kind_code, model.norm_p, model.margin,
        model.entity_table, model.relation_table, h, r, t, upstream, gh, g_r, gt,
    )
    sink.add_entity_batch(h, gh)
    sink.add_entity_batch(t, gt)
    sink.add_relation_batch(r, g_r)


def grad_swap_batch(
    model: EmbeddingModel,
    anchor: np.ndarray,
    r: np.ndarray,
    vecs: np.ndarray,
    side: int,
    upstream: np.ndarray,
    sink: GradSink,
) -> np.ndarray:
    """Batch gradients where the corrupted slot holds explicit vectors.

    Anchor and relation gradients go into the sink; the returned (n, d)
    array holds the gradients on the explicit vectors for the caller to
    route.
    """
    anchor = np.ascontiguousarray(anchor, dtype=np.int64)
    r = np.ascontiguousarray(r, dtype=np.int64)
    vecs = np.ascontiguousarray(vecs, dtype=np.float64)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    n, d, d_r = len(anchor), model.dim, model.relation_table.shape[1]
    g_anchor = np.empty((n, d))
    g_r = np.empty((n, d_r))
    g_vec = np.empty((n, d))
    kernels.grad_swap_into(
        model.kind_code, model.norm_p, model.margin,
        model.entity_table, model.relation_table,
        anchor, r, vecs, side, upstream, g_anchor, g_r, g_vec,
    )
    sink.add_entity_batch(anchor, g_anchor)
    sink.add_relation_batch(r, g_r)
    return g_vec


def save_checkpoint(model: EmbeddingModel, path, epoch: int):
    """Write the binary checkpoint format.

    Magic line, key=value header lines, one blank line, then the entity
    and relation tables as row-major little-endian float32.
    """
    header = (
        f"{CHECKPOINT_MAGIC}\n"
        f"kind={model.kind}\n"
        f"dim={model.dim}\n"
        f"entities={model.num_entities}\n"
        f"relations={model.num_relations}\n"
        f"margin={model.margin!r}\n"
        f"epoch={epoch}\n"
        f"norm={model.norm_p}\n"
        "\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(model.entity_table.astype("<f4").tobytes(order="C"))
        fh.write(model.relation_table.astype("<f4").tobytes(order="C"))


def load_checkpoint(path) -> tuple[EmbeddingModel, int]:
    """Read a checkpoint; returns (model, epoch stored in the header)."""
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    magic = buf.readline().decode("ascii", errors="replace").strip()
    if magic != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    fields = {}
    while True:
        line = buf.readline().decode("ascii", errors="replace").rstrip("\n")
        if line == "":
            break
        if "=" not in line:
            raise ParseError(f"{path}: malformed header line {line!r}")
        key, value = line.split("=", 1)
        fields[key] = value
    try:
        kind = fields["kind"]
        dim = int(fields["dim"])
        n_ent = int(fields["entities"])
        n_rel = int(fields["relations"])
        margin = float(fields["margin"])
        epoch = int(fields["epoch"])
    except KeyError as exc:
        raise ParseError(f"{path}: missing header field {exc}") from None
    norm_p = int(fields.get("norm", 1 if kind == "TransE" else 2))
    if kind not in KINDS:
        raise ParseError(f"{path}: unknown kind {kind!r}")
    d_r = relation_dim(kind, dim)
    body = data[buf.tell():]
    expected = 4 * (n_ent * dim + n_rel * d_r)
    if len(body) != expected:
        raise ParseError(f"{path}: table payload is {len(body)} bytes, expected {expected}")
    flat = np.frombuffer(body, dtype="<f4")
    ent = flat[: n_ent * dim].astype(np.float64).reshape(n_ent, dim)
    rel = flat[n_ent * dim:].astype(np.float64).reshape(n_rel, d_r)
    model = EmbeddingModel(
        kind=kind, dim=dim, margin=margin,
        entity_table=np.ascontiguousarray(ent),
        relation_table=np.ascontiguousarray(rel),
        norm_p=norm_p,
    )
    return model, epoch
