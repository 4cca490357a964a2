"""Exception types raised across the toolkit.

All errors derive from :class:`SubdeconvError` (itself a ``ValueError``) so
callers can catch either the specific condition or anything raised by the
library.
"""


class SubdeconvError(ValueError):
    """Base class for all toolkit errors."""


class EmptyPartition(SubdeconvError):
    """Block structure built from an empty dimension list."""


class NonPositiveDimension(SubdeconvError):
    """Block structure containing a dimension < 1."""


class NotOrthonormal(SubdeconvError):
    """Matrix failed the orthonormality bound."""


class DimMismatch(SubdeconvError):
    """Operands disagree on coordinate dimension."""


class TooFewSamples(SubdeconvError):
    """Not enough time steps for the requested operation."""


class EmptyImage(SubdeconvError):
    """Density grid with no positive mass."""


class UnknownShape(SubdeconvError):
    """Shape identifier outside the built-in 3-D catalog."""


class NotUndercomplete(SubdeconvError):
    """Observation dimension does not exceed source dimension."""


class ShapeMismatch(SubdeconvError):
    """Filter / plan shapes are inconsistent."""


class RankDeficient(SubdeconvError):
    """Requested whitening rank exceeds the numerical rank of the data."""


class NotWhitened(SubdeconvError):
    """ICA input is not empirically white."""


class DegenerateKernel(SubdeconvError):
    """Kernel dependence measure fed only zero (constant-sample) Grams."""


class NonFiniteDeterminant(SubdeconvError):
    """Log-determinant ratio is not finite."""


class TooLarge(SubdeconvError):
    """Exhaustive search requested above the factorial guard."""


class SingleBlock(SubdeconvError):
    """Amari index is undefined for a single block."""


class DegenerateSamples(SubdeconvError):
    """Samples have zero spread."""


class ConfigError(SubdeconvError):
    """Experiment configuration file is invalid."""
