"""Experiment configuration: JSON file, environment and command-line overrides."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from evit.efficacy import TrainConfig
from evit.errors import ConfigError
from evit.population import builtin_population, load_population
from evit.surrogate import GeneratorConfig
from evit.valuation import UtilityTable, ValuationConfig

SEED_ENV = "EVIT_SEED"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    population: str = "builtin"
    out: str = "results"
    k: int = 5
    weight_starts: int = 64
    n_samples: int = 10_000
    ci_level: float = 0.90
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    valuation: ValuationConfig = field(default_factory=ValuationConfig)
    utilities: UtilityTable = field(default_factory=UtilityTable)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError("k", "must be a positive integer")
        if not isinstance(self.weight_starts, int) or self.weight_starts < 1:
            raise ConfigError("weight_starts", "must be a positive integer")
        if not isinstance(self.n_samples, int) or self.n_samples < 2:
            raise ConfigError("n_samples", "must be an integer >= 2")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level", "must lie in (0, 1)")

    def load_population(self):
        if self.population == "builtin":
            return builtin_population()
        return load_population(self.population)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Propagate one global seed to every seeded stage."""
        return replace(
            self,
            seed=seed,
            generator=replace(self.generator, seed=seed),
            train=replace(self.train, seed=seed),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator"]["shifts"] = [list(row) for row in self.generator.shifts]
        return d


_SECTIONS = {
    "generator": GeneratorConfig,
    "train": TrainConfig,
    "valuation": ValuationConfig,
    "utilities": UtilityTable,
}


def _build(cls, values: dict, prefix: str):
    if not isinstance(values, dict):
        raise ConfigError(prefix, "must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}", "unknown field")
    values = dict(values)
    if cls is GeneratorConfig and "shifts" in values:
        values["shifts"] = tuple(tuple(row) for row in values["shifts"])
    if cls is ValuationConfig and values.get("class_proportions") is not None:
        values["class_proportions"] = tuple(values["class_proportions"])
    try:
        return cls(**values)
    except ConfigError as exc:
        raise ConfigError(f"{prefix}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(prefix, str(exc)) from None


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config", "must be a JSON object")
    top = {}
    for key, value in d.items():
        if key in _SECTIONS:
            top[key] = _build(_SECTIONS[key], value, key)
        elif key in {f.name for f in fields(ExperimentConfig)}:
            top[key] = value
        else:
            raise ConfigError(key, "unknown field")
    cfg = ExperimentConfig(**top)
    if "seed" in d:
        cfg = _seed_sections(cfg, d)
    return cfg


def _seed_sections(cfg, d):
    # an explicit section seed wins over the global one
    gen_seed = d.get("generator", {}).get("seed", cfg.seed)
    train_seed = d.get("train", {}).get("seed", cfg.seed)
    return replace(
        cfg,
        generator=replace(cfg.generator, seed=gen_seed),
        train=replace(cfg.train, seed=train_seed),
    )


def load_config(path=None, seed=None, out=None, env=None) -> ExperimentConfig:
    """Defaults < JSON file < ``EVIT_SEED`` < explicit arguments."""
    env = os.environ if env is None else env
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path}: invalid JSON ({exc})") from None
        cfg = config_from_dict(raw)
    else:
        cfg = ExperimentConfig()
    if env.get(SEED_ENV):
        try:
            cfg = cfg.with_seed(int(env[SEED_ENV]))
        except ValueError:
            raise ConfigError(SEED_ENV, f"not an integer: {env[SEED_ENV]!r}") from None
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if out is not None:
        cfg = replace(cfg, out=str(out))
    return cfg
