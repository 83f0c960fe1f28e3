"""Exception hierarchy."""

from __future__ import annotations


class EpictlError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(EpictlError, ValueError):
    """Bad user input: parameters, configs, partitions. CLI exit code 1."""


class ParamValidationError(ValidationError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigError(ValidationError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class InvalidState(ValidationError):
    pass


class InvalidPartition(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


class DomainError(EpictlError, ValueError):
    """A state component is outside the domain of a log/reciprocal formula."""

    def __init__(self, component: str, value: float):
        self.component = component
        self.value = value
        super().__init__(f"component {component!r} must be > 0, got {value!r}")


class NumericalOverflow(EpictlError, ArithmeticError):
    def __init__(self, message: str, *, component: int | None = None, t: float | None = None,
                 step: int | None = None, replicate: int | None = None, state=None):
        self.component = component
        self.t = t
        self.step = step
        self.replicate = replicate
        self.state = state
        super().__init__(message)


class DegenerateDenominator(EpictlError, ArithmeticError):
    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(f"denominator {name} = {value!r} is below the degeneracy threshold")


class UnsupportedExponent(EpictlError, ValueError):
    pass


class NoConvergence(EpictlError, RuntimeError):
    def __init__(self, message: str, best_residual: float, best_state=None):
        self.best_residual = best_residual
        self.best_state = best_state
        super().__init__(f"{message} (best residual {best_residual:.3e})")


class UndefinedModularity(EpictlError, ValueError):
    pass
