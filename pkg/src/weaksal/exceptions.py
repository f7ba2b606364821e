"""Exception types shared across the package."""


class DecodeError(ValueError):
    """Image file exists but cannot be decoded as 8-bit RGB."""


class DimensionMismatch(ValueError):
    """Inputs that must agree in shape or region count do not."""


class DegenerateInput(ValueError):
    """Input is structurally valid but degenerate for the operation."""


class NonSubmodularError(ValueError):
    """Pairwise disagreement penalty is negative; exact graph-cut inference
    requires nonnegative penalties."""


class TooLargeError(ValueError):
    """Instance exceeds the size limit of an exhaustive oracle."""


class SolveFailure(RuntimeError):
    """A linear solve did not reach the required residual."""


class ModelMismatch(ValueError):
    """Model file dimensions do not match the supplied features."""


class MissingPrediction(FileNotFoundError):
    """An evaluation record has no corresponding prediction file."""
