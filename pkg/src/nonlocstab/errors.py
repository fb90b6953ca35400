"""Exception hierarchy shared by all modules.

The command-line front end maps these onto exit codes: configuration
problems exit with 1, numerical failures with 2 and I/O failures with 3.
"""


class NonlocStabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(NonlocStabError, ValueError):
    """Invalid configuration or invalid construction parameters.

    ``path`` names the offending key (dotted) when known; ``line`` and
    ``column`` locate syntax errors in a config file.
    """

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path:
            where.append(f"at '{path}'")
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))


class KernelError(ConfigError):
    """Kernel parameters violate an admissibility condition."""


class NumericError(NonlocStabError, ArithmeticError):
    """A numerical procedure failed to deliver the requested accuracy."""


class QuadratureError(NumericError):
    def __init__(self, message, estimate=None):
        self.estimate = estimate
        if estimate is not None:
            message = f"{message} (achieved error estimate {estimate:.3e})"
        super().__init__(message)


class DegenerateKernelError(NumericError):
    """Row mass of the kernel vanishes where it must be positive."""


class SolverError(NumericError):
    """Singular or ill-conditioned linear system, or bad residual."""


class ConvergenceError(NumericError):
    def __init__(self, message, last_increment=None, history=None):
        self.last_increment = last_increment
        self.history = list(history or [])
        super().__init__(message)


class RangeError(NumericError):
    """Values left the invertibility range of a nonlinearity."""
