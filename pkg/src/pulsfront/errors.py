"""Exception types shared across the package.

Exit-code mapping used by the CLI lives on the classes so library users
get the same taxonomy: configuration problems (2), numerical failures (3),
audit failures (4).
"""


class PulsfrontError(Exception):
    exit_code = 3


class ConfigurationError(PulsfrontError):
    exit_code = 2


class EllipticityError(ConfigurationError):
    """Diffusion coefficient fails the uniform positivity floor."""


class EvaluationError(PulsfrontError):
    """A sampled quantity came out non-finite."""


class NumericalError(PulsfrontError):
    exit_code = 3


class IterationError(NumericalError):
    """An iterative solver ran out of iterations; carries the last gap."""

    def __init__(self, message, last_gap=None):
        super().__init__(message)
        self.last_gap = last_gap


class PositivityError(NumericalError):
    """A scheme produced a nonpositive iterate where positivity is contractual."""


class ContainmentError(NumericalError):
    """A tracked front ran too close to the computational boundary."""


class PreconditionError(NumericalError):
    """A mathematical standing hypothesis fails on the given medium, e.g. the
    zero state is not linearly unstable, or a requested speed is subcritical."""


class AuditFailure(PulsfrontError):
    exit_code = 4
