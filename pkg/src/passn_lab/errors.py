"""Exception types shared across the library."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


class InfiniteLossError(ArithmeticError):
    """A log-loss is exactly +infinity (zero coverage or zero confidence).

    Raised instead of returning ``inf`` so callers can tell a genuine
    infinite-loss condition apart from numeric overflow.
    """


class StreamExhausted(RuntimeError):
    """A candidate stream ran out before a full batch was assembled.

    Carries the partial batch (``kept``) and the number of discarded
    candidates so callers can decide whether to train on the remainder.
    """

    def __init__(self, kept, discarded_count):
        super().__init__(
            f"stream exhausted with {len(kept)} kept and "
            f"{discarded_count} discarded candidates"
        )
        self.kept = kept
        self.discarded_count = discarded_count


class TrainingDiverged(RuntimeError):
    """Non-finite values appeared in policy parameters during training."""


class InfeasibleBound(RuntimeError):
    """No bound case applied to a query that passed validation.

    This should be unreachable for valid queries; it doubles as the
    runtime assertion that the all-mass-on-one-answer case never occurs.
    """
