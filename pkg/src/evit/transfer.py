"""Normal-condition alignment, kNN damage classification and pairwise transfers."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from evit.errors import DegenerateNormalConditionError, InvalidInputError


class QualityVector(NamedTuple):
    """Rates of true, false-positive, false-negative and false-damage predictions."""

    tr: float
    fpr: float
    fnr: float
    fdr: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


class NormalStats(NamedTuple):
    mean: np.ndarray
    std: np.ndarray


class Algorithm(enum.Enum):
    NCA = "nca"
    NULL = "null"


@dataclass(frozen=True)
class TransferStrategy:
    source: str | None
    algorithm: Algorithm

    def __post_init__(self):
        if (self.algorithm is Algorithm.NULL) != (self.source is None):
            raise InvalidInputError("the null strategy has no source and every other strategy has one")

    @classmethod
    def null(cls) -> "TransferStrategy":
        return cls(None, Algorithm.NULL)


@dataclass(frozen=True)
class TransferRecord:
    source_id: str
    target_id: str
    similarity: float
    quality: QualityVector

    def __post_init__(self):
        if self.source_id == self.target_id:
            raise InvalidInputError("a structure cannot transfer to itself")


def normal_stats(features) -> NormalStats:
    """Mean and population-form (ddof=0) standard deviation per feature."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DegenerateNormalConditionError("no normal-condition rows")
    return NormalStats(x.mean(axis=0), x.std(axis=0))


def _check_stats(stats: NormalStats, which: str) -> None:
    for name, arr in (("mean", stats.mean), ("std", stats.std)):
        if not np.all(np.isfinite(arr)):
            raise DegenerateNormalConditionError(f"{which} {name} is not finite")
    # a constant column can leave rounding residue in the std
    if np.any(stats.std <= 1e-12 * np.maximum(np.abs(stats.mean), 1.0)):
        raise DegenerateNormalConditionError(f"{which} normal condition has zero variance")


def normal_condition_align(features, source: NormalStats, target: NormalStats) -> np.ndarray:
    """Map target features so its undamaged statistics match the source's."""
    _check_stats(source, "source")
    _check_stats(target, "target")
    x = np.asarray(features, dtype=float)
    return (x - target.mean) / target.std * source.std + source.mean


def knn_predict(train_features, train_labels, query_features, k: int = 5) -> np.ndarray:
    """Majority vote over the k nearest training rows (Euclidean).

    Neighbours are ranked by squared distance and then by label, and vote ties
    go to the smaller label, so the result does not depend on the order of
    the training rows.
    """
    X = np.asarray(train_features, dtype=float)
    y = np.asarray(train_labels, dtype=int)
    Q = np.asarray(query_features, dtype=float)
    if X.ndim != 2 or Q.ndim != 2 or X.shape[1] != Q.shape[1]:
        raise InvalidInputError("train and query features must be 2-D with matching widths")
    if len(y) != len(X):
        raise InvalidInputError("train features and labels differ in length")
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k!r}")
    if k > len(X):
        raise InvalidInputError(f"k={k} exceeds the {len(X)} training rows")
    if np.any(y < 0):
        raise InvalidInputError("labels must be non-negative")

    n_labels = int(y.max()) + 1
    out = np.empty(len(Q), dtype=int)
    for i, q in enumerate(Q):
        d2 = ((X - q) ** 2).sum(axis=1)
        order = np.lexsort((y, d2))[:k]
        votes = np.bincount(y[order], minlength=n_labels)
        out[i] = int(np.argmax(votes))  # argmax returns the first, i.e. smallest, label
    return out


def score_quality(true_labels, predicted_labels) -> QualityVector:
    t = np.asarray(true_labels, dtype=int)
    p = np.asarray(predicted_labels, dtype=int)
    if t.shape != p.shape or t.ndim != 1:
        raise InvalidInputError("true and predicted labels must be 1-D and equal in length")
    n = len(t)
    if n == 0:
        raise InvalidInputError("cannot score an empty prediction set")
    correct = int(np.sum(t == p))
    false_pos = int(np.sum((t == 0) & (p != 0)))
    false_neg = int(np.sum((t != 0) & (p == 0)))
    false_dmg = n - correct - false_pos - false_neg
    return QualityVector(correct / n, false_pos / n, false_neg / n, false_dmg / n)


def transfer_quality(source, target, k: int = 5) -> QualityVector:
    """Train on the standardised source, predict the NCA-aligned target."""
    src_stats = normal_stats(source.normal_condition())
    tgt_stats = normal_stats(target.normal_condition())
    _check_stats(src_stats, f"source {source.structure_id}")
    _check_stats(tgt_stats, f"target {target.structure_id}")
    unit = NormalStats(np.zeros(2), np.ones(2))
    train = (source.features - src_stats.mean) / src_stats.std
    query = normal_condition_align(target.features, unit, tgt_stats)
    # target labels are used for scoring only
    predicted = knn_predict(train, source.labels, query, k=k)
    return score_quality(target.labels, predicted)


def run_pairwise_transfers(
    datasets,
    similarity: Callable[[str, str], float],
    k: int = 5,
) -> list[TransferRecord]:
    """Every ordered (source, target) pair, sorted by source id then target id."""
    if len(datasets) < 2:
        raise InvalidInputError("need at least two structures for pairwise transfer")
    by_id = {ds.structure_id: ds for ds in datasets}
    if len(by_id) != len(datasets):
        raise InvalidInputError("duplicate structure id among datasets")
    for ds in datasets:
        if np.any(ds.counts == 0):
            raise InvalidInputError(f"{ds.structure_id}: every health state must be present")
    ids = sorted(by_id)
    records = []
    for s in ids:
        for t in ids:
            if s == t:
                continue
            q = transfer_quality(by_id[s], by_id[t], k=k)
            records.append(TransferRecord(s, t, float(similarity(s, t)), q))
    return records


RECORD_HEADER = ("source_id", "target_id", "similarity", "tr", "fpr", "fnr", "fdr")


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_HEADER)
    for r in records:
        writer.writerow([r.source_id, r.target_id, repr(float(r.similarity)), *(repr(float(v)) for v in r.quality)])
    return buf.getvalue()


def records_from_csv(text: str) -> list[TransferRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != RECORD_HEADER:
        raise InvalidInputError(f"transfer CSV must start with header {','.join(RECORD_HEADER)}")
    return [
        TransferRecord(r[0], r[1], float(r[2]), QualityVector(*(float(v) for v in r[3:7])))
        for r in rows[1:]
    ]

