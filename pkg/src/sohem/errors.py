"""Exception types shared across the mining engine."""


class MiningError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MiningError, ValueError):
    """An argument fell outside a pure function's numeric domain."""


class NonFiniteLoss(MiningError):
    """A record carries a loss that is negative, NaN, or infinite."""


class BackgroundWithLocLoss(MiningError):
    """A background record carries a localization loss or a target box."""


class DegenerateBox(MiningError):
    """A box has non-positive width/height or non-finite coordinates."""


class InconsistentClsLoss(MiningError):
    """A record's stored l_cls disagrees with -log(p_u)."""


class BothWeightsZero(MiningError, ValueError):
    """alpha and beta are both zero; the selection score is undefined."""


class MixedImages(MiningError):
    """Per-image suppression received records from more than one image."""


class EmptyBatch(MiningError):
    """An operation that needs at least one record received none."""


class ColdThresholds(MiningError):
    """Stratum assignment was requested before any batch was observed."""


class NonMonotonicIteration(MiningError):
    """Loss observations arrived with a non-increasing iteration index."""


class DivergedLoss(MiningError):
    """A windowed mean loss exceeded the divergence ceiling."""
