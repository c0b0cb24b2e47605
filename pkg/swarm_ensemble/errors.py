class SwarmEnsembleError(Exception):
    """Base class for every error raised by swarm_ensemble."""

    exit_code = 1


class ConfigError(SwarmEnsembleError, ValueError):
    """Invalid arguments or configuration values."""

    exit_code = 1


class DataError(SwarmEnsembleError, ValueError):
    """Malformed datasets, schemas, cubes or solution files."""

    exit_code = 2


class DegenerateWeightsError(DataError):
    def __init__(self, message: str = "degenerate weights"):
        super().__init__(message)


class NumericError(SwarmEnsembleError, ValueError):
    """The objective produced a value the optimizer cannot rank."""

    exit_code = 3
