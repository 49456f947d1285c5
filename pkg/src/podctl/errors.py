"""Exception types shared across the package.

Each maps to a CLI exit code: configuration problems exit with 2, failed
rigor checks with 3 and solver non-convergence with 4.
"""


class PodctlError(Exception):
    exit_code = 1


class ConfigError(PodctlError, ValueError):
    """Invalid argument or configuration."""

    exit_code = 2


class InternalConsistencyError(PodctlError, RuntimeError):
    """An assembled object violates a structural invariant."""

    exit_code = 3


class RigorError(PodctlError, AssertionError):
    """A certified bound fell below the error it should dominate."""

    exit_code = 3


class ConvergenceError(PodctlError, RuntimeError):
    """An iterative solver did not converge.

    Parameters
    ----------
    message : str
    step : int, optional
        Time index or iteration at which the failure happened.
    residual : float, optional
        Last residual norm.
    """

    exit_code = 4

    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual
