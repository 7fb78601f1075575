"""Synthetic modal datasets standing in for measured natural frequencies.

Each structure gets beam-scaled baseline frequencies ``f ~ (c / L) sqrt(E / rho)``
with a small topology-dependent mass factor. Damage classes shift the class
means by fractional amounts, and samples are Gaussian about the class means.

Damage is simulated by added masses, so its relative effect is larger on
smaller and lighter structures. The shift table applies at the reference
wingspan and density; the first-mode shifts are multiplied by
``(reference_wingspan / L) ** sensitivity_exponent`` and the second-mode
shifts by ``(reference_density / rho) ** sensitivity_exponent``. With
``sensitivity_exponent=0`` every structure gets the same fractional shifts.
"""

from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from evit.errors import ConfigError, InvalidInputError
from evit.population import N_CLASSES, StructureAttributes, Topology

# f1 lands in roughly 7-28 Hz across the builtin population
C1 = 0.003
C2 = 0.0075

TOPOLOGY_MASS_FACTOR = {
    Topology.BASE: 1.0,
    Topology.ENGINES: 0.90,
    Topology.WINGLETS: 0.97,
}

DEFAULT_SHIFTS = (
    (0.0, 0.0),
    (-0.04, -0.01),  # wing
    (-0.005, -0.03),  # tailplane
    (-0.015, -0.015),  # fuselage
)

CSV_HEADER = ("structure_id", "f1_hz", "f2_hz", "label")


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    samples_per_class: int = 50
    noise_fraction: float = 0.005
    shifts: tuple = DEFAULT_SHIFTS
    sensitivity_exponent: float = 1.0
    reference_wingspan: float = 2.0
    reference_density: float = 8400.0

    def __post_init__(self):
        if not isinstance(self.samples_per_class, int) or self.samples_per_class < 1:
            raise ConfigError("samples_per_class", f"must be an integer >= 1, got {self.samples_per_class!r}")
        if not 0.0 < self.noise_fraction < 0.2:
            raise ConfigError("noise_fraction", f"must lie in (0, 0.2), got {self.noise_fraction!r}")
        shifts = tuple(tuple(float(v) for v in row) for row in self.shifts)
        if len(shifts) != N_CLASSES or any(len(row) != 2 for row in shifts):
            raise ConfigError("shifts", "expected one (f1, f2) pair per health state")
        if any(not -1.0 < v < 1.0 for row in shifts for v in row):
            raise ConfigError("shifts", "fractional shifts must lie in (-1, 1)")
        object.__setattr__(self, "shifts", shifts)
        if self.sensitivity_exponent < 0:
            raise ConfigError("sensitivity_exponent", "must be non-negative")
        if not self.reference_wingspan > 0:
            raise ConfigError("reference_wingspan", "must be positive")
        if not self.reference_density > 0:
            raise ConfigError("reference_density", "must be positive")

    def for_structure(self, structure_id: str) -> "GeneratorConfig":
        """Config with a per-structure seed derived from the global one."""
        ss = np.random.SeedSequence([self.seed, zlib.crc32(structure_id.encode())])
        return replace(self, seed=int(ss.generate_state(1, dtype=np.uint64)[0] >> 1))


@dataclass
class ModalDataset:
    structure_id: str
    features: np.ndarray
    labels: np.ndarray
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[1] != 2:
            raise InvalidInputError("features must be an (N, 2) array")
        if self.features.shape[0] != self.labels.shape[0]:
            raise InvalidInputError("features and labels differ in length")
        if not np.all(np.isfinite(self.features)) or np.any(self.features <= 0):
            raise InvalidInputError(f"{self.structure_id}: frequencies must be positive and finite")
        if np.any((self.labels < 0) | (self.labels >= N_CLASSES)):
            raise InvalidInputError(f"{self.structure_id}: labels must be in 0..{N_CLASSES - 1}")

    def __len__(self):
        return len(self.labels)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)

    def normal_condition(self) -> np.ndarray:
        return self.features[self.labels == 0]


def baseline_frequencies(attrs: StructureAttributes) -> tuple[float, float]:
    speed = np.sqrt(attrs.youngs_modulus * 1e9 / attrs.density)
    factor = speed * TOPOLOGY_MASS_FACTOR[attrs.topology] / attrs.scale.wingspan_m
    return C1 * factor, C2 * factor


def damage_shifts(attrs: StructureAttributes, cfg: GeneratorConfig) -> np.ndarray:
    """Per-class fractional shifts, shape (4, 2), for this structure."""
    gain = np.array(
        [
            cfg.reference_wingspan / attrs.scale.wingspan_m,
            cfg.reference_density / attrs.density,
        ]
    )
    return np.array(cfg.shifts) * gain**cfg.sensitivity_exponent


def class_means(attrs: StructureAttributes, cfg: GeneratorConfig) -> np.ndarray:
    base = np.array(baseline_frequencies(attrs))
    return base * (1.0 + damage_shifts(attrs, cfg))


def generate_dataset(attrs: StructureAttributes, cfg: GeneratorConfig) -> ModalDataset:
    rng = np.random.default_rng(cfg.seed)
    means = class_means(attrs, cfg)
    n = cfg.samples_per_class
    labels = np.repeat(np.arange(N_CLASSES), n)
    centre = means[labels]
    noise = rng.standard_normal(centre.shape)
    features = centre + noise * cfg.noise_fraction * centre
    return ModalDataset(attrs.id, features, labels, seed=cfg.seed)


def generate_population(population, cfg: GeneratorConfig) -> list[ModalDataset]:
    return [generate_dataset(s, cfg.for_structure(s.id)) for s in population]


def dataset_to_csv(ds: ModalDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for (f1, f2), y in zip(ds.features, ds.labels):
        writer.writerow([ds.structure_id, repr(float(f1)), repr(float(f2)), int(y)])
    return buf.getvalue()


def dataset_from_csv(text: str) -> ModalDataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise InvalidInputError(f"dataset CSV must start with header {','.join(CSV_HEADER)}")
    body = rows[1:]
    if not body:
        raise InvalidInputError("dataset CSV has no rows")
    ids = {r[0] for r in body}
    if len(ids) != 1:
        raise InvalidInputError("dataset CSV mixes structure ids")
    features = np.array([[float(r[1]), float(r[2])] for r in body])
    labels = np.array([int(r[3]) for r in body])
    return ModalDataset(ids.pop(), features, labels)
