"""Expected value of information transfer (EVIT) across a structural population."""

from evit.errors import (
    ConfigError,
    DegenerateNormalConditionError,
    DegeneratePopulationError,
    EvitError,
    InvalidInputError,
    TrainingDivergedError,
    UndefinedCorrelationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateNormalConditionError",
    "DegeneratePopulationError",
    "EvitError",
    "InvalidInputError",
    "TrainingDivergedError",
    "UndefinedCorrelationError",
]
