"""Exception types shared across the simulator."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class ConfigurationError(ValueError):
    """An experiment configuration is inconsistent or infeasible."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite intermediates."""


class InfeasibleAllocationError(ValueError):
    """An allocation violates the resource constraints."""
