"""Record JSONL capture.

The writer validates every record before it touches the file, so a bad
value fails inside the training loop that produced it instead of hours
later in an offline replay. Validation checks and error names match the
mining engine exactly; the wire format is its Record JSONL schema:

    {"iter": ..., "image_id": ..., "roi_id": ..., "u": ..., "p_u": ...,
     "l_cls": ..., "l_loc": ..., "pred": [x1,y1,x2,y2], "target": ...|null}
"""

from __future__ import annotations

import json
import math
import os
from typing import IO, Sequence

from .errors import (
    BackgroundWithLocLoss,
    DegenerateBox,
    InconsistentClsLoss,
    NonFiniteLoss,
    NonMonotonicIteration,
)

#: Absolute tolerance for the stored-l_cls vs -log(p_u) consistency check.
P_U_TOLERANCE = 1e-6

Coords = tuple[float, float, float, float]


def _check_box(raw: Sequence[float], what: str) -> Coords:
    coords = tuple(float(c) for c in raw)
    if len(coords) != 4:
        raise DegenerateBox(f"{what} needs 4 coordinates, got {len(coords)}")
    x1, y1, x2, y2 = coords
    if any(not math.isfinite(c) for c in coords):
        raise DegenerateBox(f"{what} has non-finite coordinates {coords}")
    if not (x1 < x2 and y1 < y2):
        raise DegenerateBox(f"{what} has non-positive extent {coords}")
    return coords


def format_record(
    *,
    iteration: int,
    image_id: int,
    roi_id: int,
    true_class: int,
    pred: Sequence[float],
    target: Sequence[float] | None = None,
    l_cls: float | None = None,
    l_loc: float = 0.0,
    p_u: float | None = None,
) -> str:
    """Validate one record and return its JSONL line (no newline).

    Classification loss comes in as `l_cls`, as the true-class probability
    `p_u`, or both; with only `p_u` the loss is derived as -log(p_u). When
    both are present they must agree.
    """
    if p_u is not None:
        p_u = float(p_u)
        if not math.isfinite(p_u) or not (0.0 < p_u <= 1.0):
            raise InconsistentClsLoss(
                f"record {roi_id}: p_u={p_u!r} outside (0, 1]"
            )
    if l_cls is None:
        if p_u is None:
            raise TypeError("one of l_cls or p_u is required")
        l_cls = -math.log(p_u)
    l_cls, l_loc = float(l_cls), float(l_loc)

    for name, value in (("l_cls", l_cls), ("l_loc", l_loc)):
        if not math.isfinite(value) or value < 0.0:
            raise NonFiniteLoss(
                f"record {roi_id}: {name} must be finite and >= 0, got {value!r}"
            )
    if true_class == 0:
        if l_loc != 0.0:
            raise BackgroundWithLocLoss(
                f"record {roi_id}: background with l_loc={l_loc!r}"
            )
        if target is not None:
            raise BackgroundWithLocLoss(
                f"record {roi_id}: background with a target box"
            )
    pred_coords = _check_box(pred, f"record {roi_id} bbox_pred")
    target_coords = None if target is None else _check_box(
        target, f"record {roi_id} bbox_target"
    )
    if p_u is not None:
        expected = -math.log(p_u)
        if abs(expected - l_cls) > P_U_TOLERANCE:
            raise InconsistentClsLoss(
                f"record {roi_id}: l_cls={l_cls!r} but -log(p_u)={expected!r}"
            )

    return json.dumps(
        {
            "iter": int(iteration),
            "image_id": int(image_id),
            "roi_id": int(roi_id),
            "u": int(true_class),
            "p_u": p_u,
            "l_cls": l_cls,
            "l_loc": l_loc,
            "pred": list(pred_coords),
            "target": None if target_coords is None else list(target_coords),
        },
        separators=(",", ":"),
    )


class RecordSink:
    """Appends Record JSONL lines to one destination; one sink per process.

    Accepts an open text stream or a path (opened in append mode and owned
    by the sink). Writes buffer in the stream and flush whenever a new
    iteration begins, and again on close, so an interrupted run keeps every
    completed iteration on disk. Iterations must be non-decreasing.
    """

    def __init__(self, dest: IO[str] | str | os.PathLike) -> None:
        if hasattr(dest, "write"):
            self._stream: IO[str] = dest  # type: ignore[assignment]
            self._owns_stream = False
        else:
            self._stream = open(dest, "a", encoding="utf-8")
            self._owns_stream = True
        self._last_iteration: int | None = None

    def write(self, *, iteration: int, **fields) -> None:
        """Validate and append one record; see `format_record` for fields."""
        line = format_record(iteration=iteration, **fields)
        iteration = int(iteration)
        if self._last_iteration is not None:
            if iteration < self._last_iteration:
                raise NonMonotonicIteration(
                    f"record iteration {iteration} precedes "
                    f"iteration {self._last_iteration} already written"
                )
            if iteration != self._last_iteration:
                self._stream.flush()
        self._last_iteration = iteration
        self._stream.write(line + "\n")

    def flush(self) -> None:
        self._stream.flush()

    def close(self) -> None:
        self._stream.flush()
        if self._owns_stream:
            self._stream.close()

    def __enter__(self) -> "RecordSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_record(sink: RecordSink, **fields) -> None:
    """Append one validated record to the sink. Raises, never returns, on
    a bad record; the sink and file are left exactly as they were."""
    sink.write(**fields)
