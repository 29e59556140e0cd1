"""
Exception hierarchy shared by every stage of the pipeline.

Each error carries the process exit code the command-line front end
reports when the error escapes a command.
"""


class NarrinfError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputDataError(NarrinfError):
    exit_code = 2


class ConfigurationError(NarrinfError, ValueError):
    exit_code = 2


class GraphConstructionError(InputDataError):
    def __init__(self, message: str, edge_index: int | None = None):
        super().__init__(message)
        self.edge_index = edge_index


class ExposureOverflowError(InputDataError):
    def __init__(self, message: str, hop: int):
        super().__init__(message)
        self.hop = hop


class SamplerInitializationError(InputDataError):
    pass


class EmptyNarrativeError(NarrinfError):
    exit_code = 3


class ConvergenceError(NarrinfError):
    exit_code = 4

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class UnsupportedConfigurationError(NarrinfError):
    exit_code = 5


class SingularDesignError(NarrinfError):
    exit_code = 6

    def __init__(self, message: str, condition_number: float, directions: list[str]):
        super().__init__(message)
        self.condition_number = condition_number
        self.directions = directions
