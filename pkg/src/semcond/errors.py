"""Exception hierarchy shared by every stage of the pipeline."""


class SemcondError(Exception):
    """Base class for all library errors."""


class ShapeError(SemcondError, ValueError):
    """Tensor or array dimensions do not chain."""


class NonFiniteError(SemcondError, FloatingPointError):
    """A NaN or Inf appeared in a value, loss or gradient."""


class FormatError(SemcondError, ValueError):
    """A file or document failed to parse or violates its schema."""


class LabelSpaceError(FormatError):
    """A class id falls outside the label space it is evaluated against."""
