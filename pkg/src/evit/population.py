"""Population registry, attribute encoding and health-state labels."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from evit.errors import InvalidInputError


class Topology(enum.Enum):
    BASE = "base"
    WINGLETS = "winglets"
    ENGINES = "engines"

    @property
    def code(self) -> float:
        # engines and winglets are the most disparate pair; base sits between
        return _TOPOLOGY_CODES[self]


_TOPOLOGY_CODES = {Topology.ENGINES: 0.0, Topology.BASE: 1.0, Topology.WINGLETS: 2.0}


class Scale(enum.Enum):
    SMALL = "small"
    LARGE = "large"

    @property
    def wingspan_m(self) -> float:
        return 1.0 if self is Scale.SMALL else 2.0

    @property
    def code(self) -> float:
        return 0.0 if self is Scale.SMALL else 2.0


class HealthState(enum.IntEnum):
    UNDAMAGED = 0
    WING = 1
    TAILPLANE = 2
    FUSELAGE = 3


N_CLASSES = len(HealthState)

ATTRIBUTE_NAMES = ("topology", "scale", "youngs_modulus", "density")

_JSON_KEYS = ("id", "topology", "scale", "material", "youngs_modulus_gpa", "density_kg_m3")


@dataclass(frozen=True)
class StructureAttributes:
    id: str
    topology: Topology
    scale: Scale
    material: str
    youngs_modulus: float  # GPa
    density: float  # kg m^-3

    def __post_init__(self):
        for name in ("youngs_modulus", "density"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidInputError(f"{self.id}: {name} must be positive and finite, got {value!r}")

    def raw_vector(self) -> np.ndarray:
        return np.array(
            [self.topology.code, self.scale.code, self.youngs_modulus, self.density],
            dtype=float,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "StructureAttributes":
        missing = [k for k in _JSON_KEYS if k not in d]
        if missing:
            raise InvalidInputError(f"structure record missing keys: {', '.join(missing)}")
        try:
            topology = Topology(str(d["topology"]).lower().lstrip("+"))
        except ValueError:
            raise InvalidInputError(f"unknown topology {d['topology']!r}") from None
        try:
            scale = Scale(str(d["scale"]).lower())
        except ValueError:
            raise InvalidInputError(f"unknown scale {d['scale']!r}") from None
        try:
            modulus = float(d["youngs_modulus_gpa"])
            density = float(d["density_kg_m3"])
        except (TypeError, ValueError):
            raise InvalidInputError(f"{d['id']}: material constants must be numbers") from None
        return cls(str(d["id"]), topology, scale, str(d["material"]), modulus, density)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "topology": self.topology.value,
            "scale": self.scale.value,
            "material": self.material,
            "youngs_modulus_gpa": self.youngs_modulus,
            "density_kg_m3": self.density,
        }


def builtin_population() -> list[StructureAttributes]:
    """The eight built-in laboratory aircraft models."""
    W, B, En = Topology.WINGLETS, Topology.BASE, Topology.ENGINES
    S, L = Scale.SMALL, Scale.LARGE
    rows = [
        ("G1", W, S, "brass", 90.0, 8400.0),
        ("G2", W, L, "aluminium", 68.0, 2710.0),
        ("G3", W, L, "steel", 200.0, 8000.0),
        ("G4", W, L, "aluminium", 68.0, 2710.0),
        ("G5", En, S, "aluminium", 68.0, 2710.0),
        ("G6", B, S, "steel+composite", 250.0, 3000.0),
        ("G7", B, S, "steel", 200.0, 8000.0),
        ("G8", B, L, "steel", 200.0, 8000.0),
    ]
    return [StructureAttributes(*row) for row in rows]


def check_unique_ids(population) -> None:
    seen = set()
    for s in population:
        if s.id in seen:
            raise InvalidInputError(f"duplicate structure id {s.id!r}")
        seen.add(s.id)


def load_population(path) -> list[StructureAttributes]:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list) or not raw:
        raise InvalidInputError(f"{path}: expected a non-empty JSON array of structures")
    population = [StructureAttributes.from_dict(d) for d in raw]
    check_unique_ids(population)
    return population


def save_population(population, path) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in population], indent=2) + "\n")


def _scale_columns(raw: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    out = np.zeros_like(raw)
    live = span > 0
    out[:, live] = 2.0 * (raw[:, live] - lo[live]) / span[live]
    return out


def encode_attributes(population) -> np.ndarray:
    """Min-max scale every attribute column to [0, 2].

    Returns an ``(n, 4)`` array with columns ordered as ``ATTRIBUTE_NAMES``.
    Columns that are constant across the population encode to 0.
    """
    if len(population) == 0:
        raise InvalidInputError("population is empty")
    raw = np.array([s.raw_vector() for s in population])
    if not np.all(np.isfinite(raw)):
        raise InvalidInputError("non-finite attribute value")
    return _scale_columns(raw, raw.min(axis=0), raw.max(axis=0))


def encode_against(population, others) -> np.ndarray:
    """Encode ``others`` using the population's ranges, clipped to [0, 2]."""
    raw = np.array([s.raw_vector() for s in population])
    extra = np.array([s.raw_vector() for s in others])
    if not np.all(np.isfinite(extra)):
        raise InvalidInputError("non-finite attribute value")
    return np.clip(_scale_columns(extra, raw.min(axis=0), raw.max(axis=0)), 0.0, 2.0)
