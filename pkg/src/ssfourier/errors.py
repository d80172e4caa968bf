"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid input: malformed system, parameter out of range."""


class BudgetError(ValidationError):
    """Exact enumeration would exceed the configured branch budget."""


class ResolutionError(RuntimeError):
    """A numerical result is under-resolved (grid too coarse, optimum on a boundary, ...)."""


class ConvergenceError(ResolutionError):
    """An iterative solver did not reach its tolerance within the iteration cap."""
