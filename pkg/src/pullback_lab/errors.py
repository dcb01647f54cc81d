"""Exception hierarchy shared by every module."""


class PullbackLabError(Exception):
    """Base class for all library errors."""


class SingularMetricError(PullbackLabError):
    pass


class DomainError(PullbackLabError):
    pass


class DegreeError(PullbackLabError):
    pass


class ChartExitError(PullbackLabError):
    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class StiffnessError(PullbackLabError):
    pass


class NoConvergenceError(PullbackLabError):
    pass


class CoverageError(PullbackLabError):
    pass


class DiskOverflowError(PullbackLabError):
    pass


class DegenerateSubmersionError(PullbackLabError):
    pass


class DescriptorError(PullbackLabError):
    pass


class MapDescriptorError(PullbackLabError):
    pass


class NormalizationError(PullbackLabError):
    pass


class RankError(PullbackLabError):
    pass


class UndersamplingError(PullbackLabError):
    pass


class ExpressionError(PullbackLabError):
    pass


class ConfigError(PullbackLabError):
    """Invalid scenario configuration; carries a field path for diagnostics."""

    def __init__(self, message, field=None, line=None):
        loc = []
        if field:
            loc.append(f"field '{field}'")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.field = field
        self.line = line
