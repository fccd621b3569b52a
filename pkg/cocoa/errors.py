"""
Exception hierarchy for the COCOA toolkit

ValidationError and its subclasses mean the caller handed us something
wrong (CLI exit code 1); everything else is a runtime failure (exit code 2).
"""


class CocoaError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(CocoaError, ValueError):
    """Invalid input, configuration or usage."""


class ConfigurationError(ValidationError):
    """Shapes, configs or method/modality combinations that cannot work."""


class InputError(ValidationError):
    """Data values outside their declared domain."""


class UsageError(ValidationError):
    """API misuse, e.g. calling backward twice on one tape."""


class SamplingError(InputError):
    """Not enough mutually non-overlapping windows to fill a batch."""


class StratificationError(InputError):
    """A label fraction too small to keep every class represented."""


class CorruptionError(ValidationError):
    """A file whose size or header disagrees with its manifest."""


class VersionError(ValidationError):
    """A file written by an unknown format version."""


class NumericDegeneracyError(CocoaError, ArithmeticError):
    """A computation that is undefined for its input, e.g. a zero-norm cosine."""


class BenchError(CocoaError, RuntimeError):
    """Measured similarity counts disagree with the closed-form count."""
