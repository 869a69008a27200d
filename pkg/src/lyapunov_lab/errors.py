"""Exception types shared across the lab."""


class LabError(Exception):
    """Base class for every error raised by lyapunov_lab."""


class InvalidField(LabError, ValueError):
    pass


class GeometryError(LabError, ValueError):
    pass


class IllConditioned(LabError, RuntimeError):
    pass


class DegeneratePressure(LabError, RuntimeError):
    pass


class PositivityViolated(LabError, ValueError):
    pass


class NoClosedForm(LabError, NotImplementedError):
    pass


class DimensionMismatch(LabError, ValueError):
    pass


class DomainError(LabError, ValueError):
    pass


class Unstable(LabError, RuntimeError):
    pass


class TooFewSamples(LabError, ValueError):
    pass


class ConfigError(LabError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if key is not None:
            loc.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.key = key


class ValidationError(ConfigError):
    pass


class NonpositiveTaylor(UserWarning):
    """min a <= 0: inadmissible geometry or under-resolution."""
