"""Exception hierarchy shared by all gpsl modules."""


class GPSLError(Exception):
    """Base class for every error raised by gpsl."""


class CorpusFormatError(GPSLError, ValueError):
    """Malformed CoNLL input (ragged columns, unknown labels, ...)."""


class EmptyCorpusError(GPSLError, ValueError):
    pass


class TemplateError(GPSLError, ValueError):
    pass


class ModelFormatError(GPSLError, ValueError):
    """Model file is truncated, inconsistent or otherwise unreadable."""


class UnsupportedVersionError(ModelFormatError):
    pass


class UnsupportedDependencyError(GPSLError, ValueError):
    """Decoder cannot handle the model's dependency set."""


class NumericalError(GPSLError, ArithmeticError):
    """A factorization failed or an iterate left its feasible region."""
