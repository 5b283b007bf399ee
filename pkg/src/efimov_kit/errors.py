"""
Exception hierarchy shared by the numerical modules and the CLI.

Each class maps to one process exit code in ``efimov_kit.main``.
"""


class EfimovKitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigurationError(EfimovKitError, ValueError):
    """Invalid physical parameters or run configuration."""

    exit_code = 2


class ConvergenceError(EfimovKitError, RuntimeError):
    """A quadrature, root search, fit or eigen-iteration did not converge."""

    exit_code = 3


class InvariantError(EfimovKitError, RuntimeError):
    """A mathematical invariant was violated by computed values."""

    exit_code = 4
