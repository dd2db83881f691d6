"""Exception hierarchy.

Numerical failures (exit code 2 on the command line) derive from
:class:`NumericalFailure`; configuration problems (exit code 1) from
:class:`ConfigError`.
"""


class ShellThermoError(Exception):
    """Base class for all package errors."""


class NumericalFailure(ShellThermoError):
    pass


class DegenerateChart(NumericalFailure):
    """The chart (or the scaled 3D map built on it) lost its local injectivity."""


class AssemblyFailure(NumericalFailure):
    pass


class SolveFailure(NumericalFailure):
    pass


class SymmetryViolation(NumericalFailure):
    pass


class SizeExceeded(NumericalFailure):
    pass


class IncompatibleMeshes(NumericalFailure):
    pass


class InsufficientData(NumericalFailure):
    pass


class ConfigError(ShellThermoError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(ConfigError):
    """Carries every validation problem found, not only the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
