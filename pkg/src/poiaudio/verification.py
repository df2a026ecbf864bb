"""Reference-set decision statistics.

A test embedding ``x`` is scored against the pristine references ``r_i`` of
the claimed identity, either through their centroid (CB) or through the best
single match (MS). Scores are oriented so that higher means "more likely the
claimed speaker", hence the Euclidean metric is negated.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embeddings import Embedding, as_embedding


class Metric(str, enum.Enum):
    COSINE = "cosine"
    NEG_SQ_EUCLIDEAN = "neg-sq-euclid"

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, cls):
            return value
        aliases = {"neg-sq-euclidean": cls.NEG_SQ_EUCLIDEAN, "squared-euclidean": cls.NEG_SQ_EUCLIDEAN}
        return aliases.get(value) or cls(value)


class Strategy(str, enum.Enum):
    CB = "CB"
    MS = "MS"

    @classmethod
    def parse_many(cls, value) -> tuple["Strategy", ...]:
        if isinstance(value, str):
            value = {"both": ["CB", "MS"]}.get(value.lower(), [value])
        return tuple(v if isinstance(v, cls) else cls(str(v).upper()) for v in value)


REAL, FAKE = "real", "fake"


def _vec(e) -> np.ndarray:
    return e.values if isinstance(e, Embedding) else np.asarray(e, dtype=np.float64)


def similarity(a, b, metric: Metric | str = Metric.COSINE) -> float:
    """cosine: a.b / (|a||b|);  neg-sq-euclid: -|a - b|^2."""
    metric = Metric.parse(metric)
    x, y = _vec(a), _vec(b)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if metric is Metric.COSINE:
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            raise ValueError("cosine similarity is undefined for a zero vector")
        return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))
    d = x - y
    return -float(np.dot(d, d))


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    """Pristine embeddings of one identity. Immutable; the centroid is cached."""

    identity: str
    members: tuple[Embedding, ...]
    ids: tuple[str, ...] = ()
    _centroid: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        members = tuple(as_embedding(m) for m in self.members)
        if not members:
            raise ValueError(f"empty reference set for identity {self.identity!r}")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise ValueError(f"reference set for {self.identity!r} mixes dims {sorted(dims)}")
        if self.ids and len(self.ids) != len(members):
            raise ValueError("ids and members differ in length")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "ids", tuple(self.ids))

    def __len__(self):
        return len(self.members)

    @property
    def dim(self) -> int:
        return self.members[0].dim

    @property
    def matrix(self) -> np.ndarray:
        return np.stack([m.values for m in self.members])

    @property
    def centroid(self) -> Embedding:
        if not self._centroid:
            self._centroid.append(compute_centroid(self))
        return self._centroid[0]


def compute_centroid(rs: ReferenceSet | Sequence) -> Embedding:
    """Elementwise mean of the reference embeddings."""
    members = rs.members if isinstance(rs, ReferenceSet) else [as_embedding(m) for m in rs]
    if len(members) == 0:
        raise ValueError("cannot take the centroid of an empty reference set")
    total = np.zeros_like(members[0].values)
    for m in members:
        total = total + m.values
    return Embedding(total / len(members))


def _check(x, rs: ReferenceSet) -> Embedding:
    x = as_embedding(x)
    if x.dim != rs.dim:
        raise ValueError(f"dimension mismatch: test {x.dim} vs references {rs.dim}")
    return x


def cb_score(x, rs: ReferenceSet, metric: Metric | str = Metric.COSINE) -> float:
    x = _check(x, rs)
    return similarity(x, rs.centroid, metric)


def ms_score(x, rs: ReferenceSet, metric: Metric | str = Metric.COSINE) -> float:
    x = _check(x, rs)
    return max(similarity(x, r, metric) for r in rs.members)


def score(x, rs: ReferenceSet, strategy: Strategy | str, metric: Metric | str = Metric.COSINE) -> float:
    strategy = Strategy(strategy)
    return cb_score(x, rs, metric) if strategy is Strategy.CB else ms_score(x, rs, metric)


def decide(s: float, threshold: float) -> str:
    """``fake`` iff the score falls strictly below the threshold."""
    return FAKE if s < threshold else REAL


@dataclass(frozen=True)
class ScoreRecord:
    utterance_id: str
    claimed_identity: str
    label: str
    strategy: str
    metric: str
    score: float


SCORE_COLUMNS = ["utterance_id", "claimed_identity", "label", "strategy", "metric", "score"]


def write_scores(path, records: Iterable[ScoreRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_COLUMNS)
        for r in records:
            w.writerow([r.utterance_id, r.claimed_identity, r.label, r.strategy, r.metric, repr(r.score)])


def read_scores(path) -> list[ScoreRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(SCORE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: score file lacks columns {sorted(missing)}")
        return [
            ScoreRecord(row["utterance_id"], row["claimed_identity"], row["label"],
                        row["strategy"], row["metric"], float(row["score"]))
            for row in reader
        ]
