"""Expected utility, EVIT against the null strategy, and source selection."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from evit.efficacy import dirichlet_mean, forward, sample_quality
from evit.errors import ConfigError, InvalidInputError
from evit.transfer import Algorithm, QualityVector, TransferStrategy


@dataclass(frozen=True)
class UtilityTable:
    """Utility per prediction of each type."""

    u_true: float = 5.0
    u_fp: float = -10.0
    u_fn: float = -50.0
    u_fd: float = -5.0

    def __post_init__(self):
        if not self.u_true > 0:
            raise ConfigError("u_true", "utility of a correct prediction must be positive")
        for name in ("u_fp", "u_fn", "u_fd"):
            if not getattr(self, name) < 0:
                raise ConfigError(name, "error utilities must be negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.u_true, self.u_fp, self.u_fn, self.u_fd], dtype=float)


@dataclass(frozen=True)
class ValuationConfig:
    target_size: int = 200
    n_classes: int = 4
    transfer_costs: dict = field(default_factory=dict)
    null_cost: float = 0.0
    class_proportions: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.target_size, int) or self.target_size < 1:
            raise ConfigError("target_size", "must be an integer >= 1")
        if self.n_classes != 4:
            raise ConfigError("n_classes", "the quality vector is defined for four health states")
        if self.class_proportions is not None:
            _check_proportions(self.class_proportions, self.n_classes)

    def cost(self, strategy: TransferStrategy) -> float:
        if strategy.algorithm is Algorithm.NULL:
            return float(self.null_cost)
        return float(self.transfer_costs.get(strategy.source, 0.0))


def _check_proportions(p, n_classes):
    p = np.asarray(p, dtype=float)
    if p.shape != (n_classes,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"class proportions must be {n_classes} non-negative values summing to 1")
    return p


def null_baseline_quality(n_classes: int = 4, class_proportions=None) -> QualityVector:
    """Quality of guessing every label uniformly at random."""
    if n_classes < 2:
        raise InvalidInputError("need at least two classes")
    c = n_classes
    p = np.full(c, 1.0 / c) if class_proportions is None else _check_proportions(class_proportions, c)
    p0 = float(p[0])
    damaged = float(p[1:].sum())
    return QualityVector(1.0 / c, p0 * (c - 1) / c, damaged / c, damaged * (c - 2) / c)


def expected_utility(q, utilities: UtilityTable, target_size: int) -> float:
    q = np.asarray(tuple(q), dtype=float)
    return float(target_size * np.dot(q, utilities.as_array()))


@dataclass(frozen=True)
class EvitResult:
    evit: float
    expected_utility: float
    baseline_utility: float
    mean_quality: np.ndarray
    samples: np.ndarray  # sampled EVIT values

    def interval(self, level: float = 0.90) -> tuple[float, float]:
        tail = (1.0 - level) / 2.0
        lo, hi = np.quantile(self.samples, [tail, 1.0 - tail])
        return float(lo), float(hi)

    @property
    def standard_error(self) -> float:
        return float(self.samples.std(ddof=1) / np.sqrt(len(self.samples)))


def _baseline(utilities, cfg):
    q0 = null_baseline_quality(cfg.n_classes, cfg.class_proportions)
    return expected_utility(q0, utilities, cfg.target_size)


def evit_from_alpha(alpha, utilities: UtilityTable, cfg: ValuationConfig, n_samples=10_000, seed=0) -> EvitResult:
    """EVIT of a transfer whose quality rates follow Dir(alpha).

    The point value uses the analytic Dirichlet mean; ``samples`` holds the
    EVIT implied by each sampled quality vector.
    """
    alpha = np.asarray(alpha, dtype=float)
    mean = dirichlet_mean(alpha)
    eu = expected_utility(mean, utilities, cfg.target_size)
    eu0 = _baseline(utilities, cfg)
    samples = np.empty(0)
    if n_samples:
        rng = np.random.default_rng(seed)
        q = sample_quality(alpha, n_samples, rng)
        samples = cfg.target_size * (q @ utilities.as_array()) - eu0
    return EvitResult(eu - eu0, eu, eu0, mean, samples)


def evit(model, similarity, utilities: UtilityTable, cfg: ValuationConfig, n_samples=10_000, seed=0) -> EvitResult:
    return evit_from_alpha(forward(model, similarity), utilities, cfg, n_samples=n_samples, seed=seed)


def null_evit(utilities: UtilityTable, cfg: ValuationConfig) -> float:
    eu0 = _baseline(utilities, cfg)
    return eu0 - eu0


@dataclass(frozen=True)
class CandidateValue:
    strategy: TransferStrategy
    similarity: float | None
    evit: float
    transfer_cost: float

    @property
    def total(self) -> float:
        return self.evit + self.transfer_cost


def optimize_strategy(model, candidates, utilities: UtilityTable, cfg: ValuationConfig):
    """Pick the strategy maximising EVIT plus transfer utility.

    ``candidates`` maps source id to its similarity with the target. The
    null strategy is always considered and wins ties, as do smaller source
    ids among equal-valued sources. Returns ``(best, table)`` with ``table``
    ranked best first.
    """
    candidates = dict(candidates)
    if not candidates:
        raise InvalidInputError("need at least one candidate source")
    null = TransferStrategy.null()
    table = [CandidateValue(null, None, null_evit(utilities, cfg), cfg.cost(null))]
    for source in sorted(candidates):
        sim = float(candidates[source])
        strategy = TransferStrategy(source, Algorithm.NCA)
        value = evit(model, sim, utilities, cfg, n_samples=0).evit
        table.append(CandidateValue(strategy, sim, value, cfg.cost(strategy)))
    # stable sort keeps the null option, then ascending ids, ahead on ties
    ranked = sorted(table, key=lambda c: -c.total)
    return ranked[0].strategy, ranked


def recommendation_report(target_id, best, ranked) -> str:
    rows = []
    for c in ranked:
        rows.append(
            {
                "source": c.strategy.source,
                "algorithm": c.strategy.algorithm.value,
                "similarity": c.similarity,
                "evit": c.evit,
                "transfer_cost": c.transfer_cost,
                "total": c.total,
                "chosen": c.strategy == best,
            }
        )
    payload = {"target_id": target_id, "chosen": best.source, "candidates": rows}
    return json.dumps(payload, indent=2) + "\n"


EVIT_CURVE_HEADER = ("sigma", "evit_mean", "evit_lo", "evit_hi")


def evit_curve(model, grid, utilities, cfg, n_samples=10_000, level=0.90, seed=0) -> list[tuple]:
    ss = np.random.SeedSequence(seed)
    rows = []
    for sigma, child in zip(grid, ss.spawn(len(grid))):
        res = evit(model, float(sigma), utilities, cfg, n_samples=n_samples, seed=child)
        lo, hi = res.interval(level)
        rows.append((float(sigma), res.evit, lo, hi))
    return rows


def evit_curve_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVIT_CURVE_HEADER)
    for row in rows:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
