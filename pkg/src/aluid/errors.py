"""Exception hierarchy shared by all aluid modules."""


class AluidError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(AluidError, ValueError):
    """Invalid configuration or parameter file."""


class DomainError(AluidError, ValueError):
    """A model quantity was evaluated outside its domain."""


class SingularityError(DomainError):
    """A denominator vanished (|d| < 1e-12)."""


class IntegrationError(AluidError, RuntimeError):
    """Integration aborted on a nonfinite state or derivative.

    Attributes
    ----------
    component : int or None
        Zero-based index of the offending state component, when known.
    step : int or None
        Step index at which the abort happened.
    partial : numpy.ndarray or None
        States computed before the abort, shape (k, 8).
    """

    def __init__(self, message, component=None, step=None, partial=None):
        super().__init__(message)
        self.component = component
        self.step = step
        self.partial = partial


class CorpusError(AluidError, RuntimeError):
    """Corpus generation failed for one trajectory."""

    def __init__(self, message, seed=None):
        super().__init__(message)
        self.seed = seed


class DatasetFormatError(AluidError, IOError):
    """A stored dataset or trajectory failed validation on load."""


class TrainingError(AluidError, RuntimeError):
    """Training produced a nonfinite loss."""

    def __init__(self, message, epoch=None, batch=None, instance=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.instance = instance


class EvaluationError(AluidError, FloatingPointError):
    """A network activation became nonfinite."""
