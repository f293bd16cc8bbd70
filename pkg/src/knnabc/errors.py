"""Exception types shared across the package."""


class KnnAbcError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(KnnAbcError, ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(KnnAbcError, ValueError):
    """Bad run configuration: unknown model, malformed config file, ...

    Carries the full list of messages so callers can report every problem
    at once instead of failing on the first.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class UnsupportedModelError(KnnAbcError):
    """The model lacks a capability (posterior oracle, analytic joint
    density) that the requested operation needs."""


class EmptyAcceptedSetError(KnnAbcError):
    """An estimator was given an accepted set with zero rows."""


class UndefinedEstimateError(KnnAbcError):
    """A ratio-form estimate has a zero denominator.

    Raised instead of silently returning 0 or NaN so the failure mode of
    double-kernel estimators stays observable.
    """


class DegenerateScaleError(KnnAbcError):
    """A data-driven smoothing scale collapsed to zero."""


class InfeasibleRadiusError(KnnAbcError):
    """The restricted sampler's acceptance probability is numerically zero
    over the probe budget."""


class InsufficientSampleError(KnnAbcError):
    """Too few auxiliary draws to estimate a local mass ratio."""


class BoundHypothesisError(KnnAbcError):
    """(k+1)/(N+1) <= xi0 * L**m failed, so the distance-moment bound
    does not apply."""


class RegimeNotCoveredError(KnnAbcError):
    """The acceptance-fraction rule of thumb only covers summary dimension
    m > 4; use the schedule-derived k/N instead."""
