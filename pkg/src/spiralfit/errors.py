"""Exception hierarchy for spiralfit."""


class SpiralFitError(Exception):
    """Base class for all library errors."""


class DegenerateDenominator(SpiralFitError):
    pass


class NoAxis(SpiralFitError):
    pass


class ZeroVector(SpiralFitError):
    pass


class NotPositiveDefinite(SpiralFitError):
    pass


class NoConvergence(SpiralFitError):
    pass


class EmptyInput(SpiralFitError):
    pass


class NumericalBreakdown(SpiralFitError):
    pass


class DomainError(SpiralFitError, ValueError):
    pass


class DegenerateCloud(SpiralFitError):
    pass


class ParseError(SpiralFitError):
    pass


class UnsupportedFormat(SpiralFitError):
    pass


class IsolatedVertex(SpiralFitError):
    pass


class EmptyRoi(SpiralFitError):
    pass


class InvalidSpec(SpiralFitError, ValueError):
    pass


class PipelineError(SpiralFitError):
    """Wraps an error raised inside :func:`detect_axis` with the failing stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
