"""Exception types shared across modules."""


class NumericsError(RuntimeError):
    """Linear-algebra failure that survived jitter escalation.

    Carries an estimate of the offending matrix's condition number in
    ``condition_estimate`` when one could be computed.
    """

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class DegenerateBeliefError(RuntimeError):
    """Raised when a posterior-probability belief cannot be sampled.

    Signals that the caller should switch to the offset-degeneracy
    fallback (treat the posterior model probability as a point mass and
    fall back to uncertainty sampling).
    """


class EvaluationError(RuntimeError):
    """A model likelihood returned a non-finite value."""


class BudgetExhaustedError(RuntimeError):
    """An active-learning step was requested past the evaluation budget."""
