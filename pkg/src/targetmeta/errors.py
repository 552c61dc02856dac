"""Exception hierarchy shared across the package."""


class TargetMetaError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TargetMetaError):
    """Input data violates a structural requirement."""


class MissingArmError(ValidationError):
    """A study unit lacks a treatment arm or an outcome."""


class TargetOutcomeError(ValidationError):
    """A target-population unit carries an arm or an outcome."""


class EmptyArmError(ValidationError):
    """A study has no treated or no control units."""


class EmptyTargetError(ValidationError):
    """No target-population units are present."""


class DimensionMismatchError(ValidationError):
    """Covariate vector has the wrong length or non-finite entries."""


class UnknownStudyError(ValidationError):
    """A study id outside {1..m} was referenced."""


class IndexOutOfRangeError(ValidationError):
    """A model term references a covariate index >= p."""


class FitError(TargetMetaError):
    """Base class for model-fitting failures."""


class NonconvergenceError(FitError):
    """Newton iteration hit its cap or the likelihood could not increase
    (typically separation or a degenerate design)."""


class SingularHessianError(FitError):
    """The (possibly ridged) Hessian could not be factorized."""


class EstimationError(TargetMetaError):
    """An estimator could not be evaluated."""


class PropensityMismatchError(EstimationError):
    """Fitted propensity models do not match the dataset shape."""


class ZeroArmWeightError(EstimationError):
    """An arm's total weight is zero: positivity has failed outright."""


class NonpositiveStudyWeightError(EstimationError):
    """A study-level weight is not strictly positive."""


class TooFewEstimatesError(EstimationError):
    """Fewer than two finite estimates were supplied."""


class AllReplicatesFailedError(EstimationError):
    """Every bootstrap replicate failed to produce an estimate."""


class InterceptSolveError(TargetMetaError):
    """The membership-intercept solver did not converge."""


class AssumptionViolationError(TargetMetaError):
    """A discrete population violates a positivity/overlap requirement."""


class ParseError(TargetMetaError):
    """A file or model-specification string could not be parsed."""
