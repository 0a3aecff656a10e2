"""File-based glue between a training loop and the mining engine.

`RecordSink` / `write_record` append per-RoI loss records as JSONL with
full validation at capture time; `read_selection` loads a selection log
and returns the chosen (image_id, roi_id) pairs for an iteration. There
is deliberately no import of the engine itself: the two sides meet only
in the file formats.
"""

from .errors import (
    BackgroundWithLocLoss,
    CaptureError,
    DegenerateBox,
    InconsistentClsLoss,
    NonFiniteLoss,
    NonMonotonicIteration,
)
from .reader import read_selection
from .writer import P_U_TOLERANCE, RecordSink, format_record, write_record

__version__ = "0.1.0"

__all__ = [
    "BackgroundWithLocLoss",
    "CaptureError",
    "DegenerateBox",
    "InconsistentClsLoss",
    "NonFiniteLoss",
    "NonMonotonicIteration",
    "P_U_TOLERANCE",
    "RecordSink",
    "format_record",
    "read_selection",
    "write_record",
]
