"""Exception hierarchy shared across the package.

Every error raised by library code derives from :class:`PricebandError` so the
CLI can catch one type, print the message, and exit nonzero.
"""

from __future__ import annotations


class PricebandError(Exception):
    """Base class for all package errors."""


# --- ingestion ---------------------------------------------------------------

class MalformedRow(PricebandError):
    def __init__(self, line_no: int, detail: str):
        self.line_no = line_no
        super().__init__(f"malformed row at line {line_no}: {detail}")


class NonMonotonicTimestamps(PricebandError):
    pass


class EmptyDataset(PricebandError):
    pass


class DegenerateRange(PricebandError):
    pass


class EmptyInput(PricebandError):
    pass


class MissingChannel(PricebandError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"required channel missing: {name}")


# --- weather volatility -------------------------------------------------------

class IncompleteWindow(PricebandError):
    pass


class InsufficientData(PricebandError):
    pass


class CalibrationDegenerate(PricebandError):
    pass


class ZeroVariance(PricebandError):
    pass


class LengthMismatch(PricebandError):
    pass


# --- sequence networks ---------------------------------------------------------

class InvalidDims(PricebandError):
    pass


class ShapeMismatch(PricebandError):
    pass


class StaleCache(PricebandError):
    pass


class NonFiniteLoss(PricebandError):
    pass


# --- generative model ----------------------------------------------------------

class DimensionMismatch(PricebandError):
    pass


class DivergedLoss(PricebandError):
    pass


class PhaseOrderViolation(PricebandError):
    pass


class InvalidSigma(PricebandError):
    pass


class UntrainedModel(PricebandError):
    pass


class VersionMismatch(PricebandError):
    pass


class CorruptCheckpoint(PricebandError):
    pass


# --- intervals & metrics --------------------------------------------------------

class EmptySet(PricebandError):
    pass


class TooFewScenarios(PricebandError):
    pass


class ConditionMismatch(PricebandError):
    pass


class EmptyRuns(PricebandError):
    pass


# --- CLI -------------------------------------------------------------------------

class MissingArtifact(PricebandError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"required artifact missing: {name}")
