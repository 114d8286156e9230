"""Exception types raised across the package."""


class PdeIdError(Exception):
    """Base class for all package errors."""


class ConstantField(PdeIdError):
    pass


class Unstable(PdeIdError):
    pass


class NonFinite(PdeIdError):
    pass


class NotConverged(PdeIdError):
    pass


class SampleError(PdeIdError):
    """Solver failure tagged with the offending parameter tuple."""

    def __init__(self, params, cause):
        super().__init__(f"{params}: {cause}")
        self.params = params
        self.cause = cause


class TooShort(PdeIdError):
    pass


class WindowOutOfRange(PdeIdError):
    pass


class FeatureError(PdeIdError):
    """Sub-extractor failure tagged with its feature family."""

    def __init__(self, family, cause):
        super().__init__(f"[{family}] {cause}")
        self.family = family
        self.cause = cause


class DegenerateLabels(PdeIdError):
    pass


class DimensionMismatch(PdeIdError):
    pass


class UntrainedModel(PdeIdError):
    pass


class MaskMismatch(PdeIdError):
    pass


class EmptyMask(PdeIdError):
    pass


class LengthMismatch(PdeIdError):
    pass


class NoFrontDetected(PdeIdError):
    pass


class DegenerateAmplitude(PdeIdError):
    pass


class IllConditioned(PdeIdError):
    pass


class DataError(PdeIdError):
    """Missing, corrupt or inconsistent files on disk."""
