"""Exception hierarchy. Every error carries a machine-readable ``code``."""


class CritmixError(Exception):
    code = "error"

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class DomainError(CritmixError, ValueError):
    """Input outside the mathematical domain of an operation."""

    code = "domain_error"


class ValidationError(CritmixError, ValueError):
    """Malformed family or configuration data."""

    code = "validation_error"

    def __init__(self, message, code=None, **info):
        super().__init__(message, **info)
        if code is not None:
            self.code = code


class RegimeError(CritmixError):
    """Operation requested in a parameter regime where it is undefined
    (e.g. stationary-ensemble sampling when no finite stationary density exists)."""

    code = "theta_regime"


class BoundaryError(CritmixError):
    """An orbit hit the branch point 1/2 exactly (measure-zero dyadic case)."""

    code = "boundary_hit"


class ReturnCensored(CritmixError):
    """A first-return search exceeded its effective-step budget."""

    code = "censored"

    def __init__(self, message="return search exceeded budget", steps=0, **info):
        super().__init__(message, **info)
        self.steps = steps


class BudgetError(CritmixError):
    """An enumeration or search would exceed the configured size budget."""

    code = "budget_exceeded"


class NonConvergenceError(CritmixError):
    """Power iteration failed to reach tolerance; carries the last residual."""

    code = "no_convergence"

    def __init__(self, message, residual, iterations, **info):
        super().__init__(message, **info)
        self.residual = residual
        self.iterations = iterations


class InsufficientSignal(CritmixError):
    """Too few correlation points above the noise floor to fit a rate."""

    code = "insufficient_signal"
