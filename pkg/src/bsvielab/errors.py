"""Exception types shared by the solvers."""


class DivergenceError(RuntimeError):
    """A recursion produced a non-finite value; names the offending node."""


class NonConvergenceError(RuntimeError):
    """An iteration exhausted its budget before reaching tolerance."""


class ResourceBudgetError(RuntimeError):
    """A Monte Carlo request exceeds the configured work budget."""
