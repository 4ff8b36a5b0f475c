"""Exception types shared across the package."""


class AdmissibilityError(ValueError):
    """A potential fails the positivity requirement on the perturbed form.

    Carries the location (x, or (x, theta)) where positivity fails.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SolverStagnationError(RuntimeError):
    """Damped Newton made no progress; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class ConvergenceError(RuntimeError):
    """A refinement study failed to settle below its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class UnboundedRatioError(ValueError):
    """Sup of a section-family ratio is infinite; names the offending zero."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
