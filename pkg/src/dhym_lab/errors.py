"""Shared exception types for contract violations."""


class DhymLabError(Exception):
    """Base class for all library errors."""


class NonHermitian(DhymLabError):
    pass


class NonPositiveMetric(DhymLabError):
    pass


class DimensionMismatch(DhymLabError):
    pass


class NotInBranch(DhymLabError):
    pass


class VanishingIntegral(DhymLabError):
    pass


class NoLift(DhymLabError):
    pass


class TooFewSamples(DhymLabError):
    pass


class InconsistentClass(DhymLabError):
    pass


class SubsolutionViolated(DhymLabError):
    pass


class BranchExit(DhymLabError):
    pass


class StructuralFailure(DhymLabError):
    pass


class NotConverged(DhymLabError):
    pass


class SliceExitsH(DhymLabError):
    def __init__(self, message, slice_index=None):
        super().__init__(message)
        self.slice_index = slice_index


class NotCauchy(DhymLabError):
    pass


class NonKaehler(DhymLabError):
    pass


class WrongDimension(DhymLabError):
    pass


class MissingResolutionData(DhymLabError):
    pass


class DeltaTooLarge(DhymLabError):
    def __init__(self, message, exit_s=None):
        super().__init__(message)
        self.exit_s = exit_s


class NotConvex(DhymLabError):
    pass


class SingularHessian(DhymLabError):
    pass


class DimensionUnsupported(DhymLabError):
    pass


class ConfigError(DhymLabError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
