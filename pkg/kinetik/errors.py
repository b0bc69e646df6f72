"""Exception hierarchy shared by all kinetik modules"""


class KinetikError(Exception):
    """Base class for kinetik errors"""


class ValidationError(KinetikError, ValueError):
    """A precondition of an operation or scenario is violated"""


class NumericalBudgetError(KinetikError, RuntimeError):
    """A numerical tolerance or resource budget could not be met"""


class QuadratureError(NumericalBudgetError):
    """Quadrature did not converge, diverged, or fell below its floor"""


class StabilityError(NumericalBudgetError):
    """Explicit time stepping left its stability or drift budget"""


class BudgetExceededError(NumericalBudgetError):
    """Requested computation exceeds the configured size budget"""
