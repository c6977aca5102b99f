"""Exception hierarchy shared by all qcffit modules."""


class QcffitError(Exception):
    """Base class for all package-specific errors."""


class DomainError(QcffitError):
    """Kinematic inputs outside the physically valid domain or twist-2 cuts."""


class SingularityError(QcffitError):
    """Lepton propagator product vanishes on the requested phi grid."""


class ShapeError(QcffitError):
    """Array argument has the wrong shape or length."""


class NonFiniteError(QcffitError):
    """A model output or loss evaluated to NaN/inf."""


class DivergenceError(QcffitError):
    """An optimization run produced a non-finite loss."""


class ConfigError(QcffitError):
    """Invalid run configuration (bad value, unknown key, bad schedule)."""


class ConvergenceError(QcffitError):
    """Iterative solver exhausted its iteration budget."""


class SchemaError(QcffitError):
    """Malformed data file; message carries row/column diagnostics."""


class MissingTruthError(QcffitError):
    """Truth-dependent metric requested on a bin without generator truth."""


class InsufficientReplicasError(QcffitError):
    """Spread statistic requested with fewer than two included replicas."""


class ZeroSigmaError(QcffitError):
    """Chi-square style metric with a zero uncertainty in the denominator."""


class DegenerateDataError(QcffitError):
    """Regression input with zero variance in the dependent variable."""


class EmptyEnsembleError(QcffitError):
    """Prediction requested from an ensemble with no usable replicas."""
