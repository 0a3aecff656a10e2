"""Validation errors, named identically to the mining engine's so a log
rejected downstream and a record rejected at capture time read the same."""


class CaptureError(Exception):
    """Base class for every error this package raises on bad records."""


class NonFiniteLoss(CaptureError):
    """A loss value is negative, NaN, or infinite."""


class BackgroundWithLocLoss(CaptureError):
    """A background record carries localization loss or a target box."""


class DegenerateBox(CaptureError):
    """A box has non-finite coordinates or non-positive extent."""


class InconsistentClsLoss(CaptureError):
    """p_u is outside (0, 1] or does not reproduce l_cls."""


class NonMonotonicIteration(CaptureError):
    """A record's iteration precedes one already written to the sink."""
