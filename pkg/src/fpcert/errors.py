"""Exception types shared across the toolkit."""


class FpcertError(Exception):
    """Base class for all toolkit errors."""


class NonFiniteInput(FpcertError):
    """An operand was NaN or infinite where a finite float is required."""


class Overflow(FpcertError):
    """Adjacent-float stepping left the finite range."""


class DivisorSpansZero(FpcertError):
    """Interval division by an interval containing zero."""


class NegativeOperand(FpcertError):
    """Interval square root of an interval extending below zero."""


class DimensionMismatch(FpcertError):
    """Vector/matrix shapes are inconsistent."""


class SameLabels(FpcertError):
    """Source and target class labels must differ."""


class ZeroWeightNorm(FpcertError):
    """Certified radius is undefined for a zero weight vector."""


class InvalidBracket(FpcertError):
    """Search bracket is empty or non-finite."""


class ZeroDirection(FpcertError):
    """Perturbation direction vanished (dead ReLU region)."""


class AbstainedTarget(FpcertError):
    """The smoothed classifier abstained, so there is no certificate to attack."""


class DomainError(FpcertError):
    """Statistical function called outside its domain."""


class DegenerateData(FpcertError):
    """Training data has a single class or is empty."""


class SchemaError(FpcertError):
    """Model file is malformed or holds non-finite values."""


class BitPatternMismatch(SchemaError):
    """Decimal weight text disagrees with the authoritative bit pattern."""


class BadMagic(FpcertError):
    """IDX file magic number is wrong."""


class TruncatedFile(FpcertError):
    """IDX payload is shorter than the header promises."""


class CountMismatch(FpcertError):
    """Image and label files disagree on the number of records."""


class InternalInvariant(FpcertError):
    """A cross-check that should be impossible to fail, failed."""
