"""Exception hierarchy shared by every stage of the pipeline."""


class EvitError(Exception):
    pass


class InvalidInputError(EvitError, ValueError):
    pass


class DegenerateNormalConditionError(EvitError, ValueError):
    """Raised when undamaged-state statistics cannot define an alignment."""


class DegeneratePopulationError(EvitError, ValueError):
    """Raised when every structure is identical, so distances cannot be normalised."""


class UndefinedCorrelationError(EvitError, ValueError):
    pass


class TrainingDivergedError(EvitError, RuntimeError):
    def __init__(self, epoch, value):
        super().__init__(f"loss became non-finite ({value!r}) at epoch {epoch}")
        self.epoch = epoch
        self.value = value


class ConfigError(EvitError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
