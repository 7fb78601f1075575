"""Weighted attribute similarity and correlation-maximising weight search."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from evit.errors import DegeneratePopulationError, InvalidInputError, UndefinedCorrelationError
from evit.population import ATTRIBUTE_NAMES

N_ATTRIBUTES = len(ATTRIBUTE_NAMES)
EQUAL_WEIGHTS = np.full(N_ATTRIBUTES, 0.5)


def project_weights(w) -> np.ndarray:
    """Clip to the non-negative orthant and rescale to unit L2 norm."""
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    norm = np.linalg.norm(w)
    if norm == 0:
        raise InvalidInputError("weights vanish after clipping to non-negative values")
    return w / norm


@dataclass(frozen=True)
class SimilarityWeights:
    w: tuple

    def __post_init__(self):
        arr = np.asarray(self.w, dtype=float)
        if arr.shape != (N_ATTRIBUTES,):
            raise InvalidInputError(f"expected {N_ATTRIBUTES} weights")
        if np.any(arr < 0) or abs(np.linalg.norm(arr) - 1.0) > 1e-9:
            raise InvalidInputError("weights must be non-negative with unit L2 norm")
        object.__setattr__(self, "w", tuple(float(v) for v in arr))

    @classmethod
    def equal(cls) -> "SimilarityWeights":
        return cls(tuple(EQUAL_WEIGHTS))

    def as_array(self) -> np.ndarray:
        return np.array(self.w)

    def to_json(self, pearson_r: float) -> str:
        payload = {f"w_{name}": v for name, v in zip(ATTRIBUTE_NAMES, self.w)}
        payload["pearson_r"] = float(pearson_r)
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> tuple["SimilarityWeights", float]:
        d = json.loads(text)
        try:
            return cls(tuple(d[f"w_{name}"] for name in ATTRIBUTE_NAMES)), float(d["pearson_r"])
        except KeyError as exc:
            raise InvalidInputError(f"weights JSON missing {exc.args[0]!r}") from None


def weighted_distance(a, b, w) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w.w if isinstance(w, SimilarityWeights) else w, dtype=float)
    if a.shape != (N_ATTRIBUTES,) or b.shape != (N_ATTRIBUTES,):
        raise InvalidInputError(f"attribute vectors must have length {N_ATTRIBUTES}")
    return float(np.sqrt(np.sum(w * (a - b) ** 2)))


def distance_matrix(encoded, w) -> np.ndarray:
    s = np.asarray(encoded, dtype=float)
    w = np.asarray(w.w if isinstance(w, SimilarityWeights) else w, dtype=float)
    diff = s[:, None, :] - s[None, :, :]
    return np.sqrt(np.sum(w * diff**2, axis=-1))


def similarity_matrix(encoded, w) -> np.ndarray:
    """``1 - d / max(d)`` over all pairs; symmetric with a unit diagonal."""
    s = np.asarray(encoded, dtype=float)
    if s.ndim != 2 or s.shape[0] < 2:
        raise InvalidInputError("need at least two encoded structures")
    d = distance_matrix(s, w)
    d_max = d.max()
    if d_max == 0:
        raise DegeneratePopulationError("all structures are identical under these weights")
    sim = 1.0 - d / d_max
    np.fill_diagonal(sim, 1.0)
    return sim


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("pearson_r needs two 1-D vectors of equal length")
    if len(x) < 3:
        raise InvalidInputError("pearson_r needs at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance input")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


class _Objective:
    """Pearson r between TR and similarity, recomputing similarity per candidate."""

    def __init__(self, records, encoded, ids):
        index = {sid: i for i, sid in enumerate(ids)}
        try:
            self.rows = np.array([index[r.source_id] for r in records])
            self.cols = np.array([index[r.target_id] for r in records])
        except KeyError as exc:
            raise InvalidInputError(f"record refers to unknown structure {exc.args[0]!r}") from None
        self.tr = np.array([r.quality.tr for r in records], dtype=float)
        if np.ptp(self.tr) == 0:
            raise UndefinedCorrelationError("TR is constant across records")
        s = np.asarray(encoded, dtype=float)
        iu = np.triu_indices(len(s), k=1)
        self.all_sq = (s[iu[0]] - s[iu[1]]) ** 2
        self.rec_sq = (s[self.rows] - s[self.cols]) ** 2

    def __call__(self, w) -> float:
        d_max = np.sqrt(np.max(self.all_sq @ w))
        if d_max == 0:
            return -np.inf
        sim = 1.0 - np.sqrt(self.rec_sq @ w) / d_max
        if np.ptp(sim) == 0:
            return -np.inf
        return pearson_r(self.tr, sim)


def _local_search(objective, w0):
    """Bounded quasi-Newton ascent from ``w0``.

    Similarity is unchanged by rescaling the weights, so the search runs over
    the non-negative orthant and the result is projected onto the unit sphere.
    """

    def negative_r(v):
        norm = np.linalg.norm(v)
        if norm == 0:
            return 1.0
        r = objective(v / norm)
        return -r if np.isfinite(r) else 1.0

    res = minimize(
        negative_r,
        project_weights(w0),
        method="L-BFGS-B",
        bounds=[(0.0, None)] * N_ATTRIBUTES,
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000},
    )
    if not np.any(res.x > 0):
        return project_weights(w0), objective(project_weights(w0))
    w = project_weights(res.x)
    return w, objective(w)


def optimize_weights(records, encoded, ids, n_starts: int = 64, seed: int = 0):
    """Weights on the non-negative unit sphere maximising r(TR, similarity).

    ``encoded`` rows are aligned with ``ids``; records reference structures by
    id. The equal-weight point is always one of the starts, so the result is
    never worse than it. Returns ``(SimilarityWeights, r)``.
    """
    if len(records) < 4:
        raise InvalidInputError("weight optimisation needs at least 4 records")
    objective = _Objective(records, encoded, ids)
    rng = np.random.default_rng(seed)
    starts = [EQUAL_WEIGHTS.copy()]
    starts += [np.abs(v) for v in rng.standard_normal((n_starts - 1, N_ATTRIBUTES))]

    baseline = objective(EQUAL_WEIGHTS)
    best_w, best_r = EQUAL_WEIGHTS.copy(), baseline
    for w0 in starts:
        w, r = _local_search(objective, w0)
        # ties resolved lexicographically so the reduction is order-free
        if r > best_r or (r == best_r and tuple(w) < tuple(best_w)):
            best_w, best_r = w, r
    if not np.isfinite(best_r):
        raise UndefinedCorrelationError("similarity is constant for every weight candidate")
    return SimilarityWeights(tuple(best_w)), float(best_r)
