"""Domain types for the mining pipeline and their JSONL wire format.

All types are immutable value objects: once constructed they can be shared
freely between threads and replayed deterministically. Construction does not
validate (logs from the wild must be loadable before being rejected);
:func:`validate_record` checks every invariant and raises a named error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .errors import (
    BackgroundWithLocLoss,
    DegenerateBox,
    InconsistentClsLoss,
    NonFiniteLoss,
)
from .schedule import ScheduleProfile

#: Absolute tolerance for the stored-l_cls vs -log(p_u) consistency check.
P_U_TOLERANCE = 1e-6

SELECTION_MODES = ("scalar", "strata")


class Stratum(str, Enum):
    """The four loss strata: high/low classification x high/low localization."""

    S1 = "s1"  # high l_cls, high l_loc
    S2 = "s2"  # high l_cls, low  l_loc
    S3 = "s3"  # low  l_cls, high l_loc
    S4 = "s4"  # low  l_cls, low  l_loc


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box in corner form, continuous pixel coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def check_box(box: BBox, what: str = "box") -> None:
    """Raise DegenerateBox unless the box has finite, strictly positive extent."""
    # finite and ordered in one comparison chain: NaN fails every comparison
    if not (box.x1 < box.x2 < math.inf and box.y1 < box.y2 < math.inf
            and box.x1 > -math.inf and box.y1 > -math.inf):
        coords = box.as_tuple()
        if any(not math.isfinite(c) for c in coords):
            raise DegenerateBox(f"{what} has non-finite coordinates {coords}")
        raise DegenerateBox(f"{what} has non-positive extent {coords}")


@dataclass(frozen=True, slots=True)
class RoiRecord:
    """One candidate region with its class truth and per-task losses."""

    roi_id: int
    image_id: int
    iteration: int
    true_class: int
    l_cls: float
    l_loc: float
    bbox_pred: BBox
    bbox_target: BBox | None = None
    p_u: float | None = None

    @property
    def is_background(self) -> bool:
        return self.true_class == 0


def validate_record(record: RoiRecord) -> None:
    """Check every RoiRecord invariant; raise the named error on violation.

    Raises:
        NonFiniteLoss: a loss is negative, NaN, or infinite.
        BackgroundWithLocLoss: a background record carries localization
            loss or a target box.
        DegenerateBox: the predicted or target box is malformed.
        InconsistentClsLoss: p_u is present but does not reproduce l_cls.
    """
    for name, value in (("l_cls", record.l_cls), ("l_loc", record.l_loc)):
        if not math.isfinite(value) or value < 0.0:
            raise NonFiniteLoss(
                f"record {record.roi_id}: {name} must be finite and >= 0, got {value!r}"
            )
    if record.is_background:
        if record.l_loc != 0.0:
            raise BackgroundWithLocLoss(
                f"record {record.roi_id}: background with l_loc={record.l_loc!r}"
            )
        if record.bbox_target is not None:
            raise BackgroundWithLocLoss(
                f"record {record.roi_id}: background with a target box"
            )
    check_box(record.bbox_pred, f"record {record.roi_id} bbox_pred")
    if record.bbox_target is not None:
        check_box(record.bbox_target, f"record {record.roi_id} bbox_target")
    if record.p_u is not None:
        if not (0.0 < record.p_u <= 1.0) or not math.isfinite(record.p_u):
            raise InconsistentClsLoss(
                f"record {record.roi_id}: p_u={record.p_u!r} outside (0, 1]"
            )
        expected = -math.log(record.p_u)
        if abs(expected - record.l_cls) > P_U_TOLERANCE:
            raise InconsistentClsLoss(
                f"record {record.roi_id}: l_cls={record.l_cls!r} but "
                f"-log(p_u)={expected!r}"
            )


@dataclass(frozen=True, slots=True)
class StratumConstraint:
    """A stratum's predicate (the high/low pattern) plus its sample quota."""

    stratum: Stratum
    cls_high: bool
    loc_high: bool
    required_size: int

    def matches(self, l_cls: float, l_loc: float,
                theta_cls: float, theta_loc: float) -> bool:
        return (l_cls >= theta_cls) == self.cls_high and (l_loc >= theta_loc) == self.loc_high


#: (stratum, cls_high, loc_high) in canonical s1..s4 order.
STRATUM_PATTERNS = (
    (Stratum.S1, True, True),
    (Stratum.S2, True, False),
    (Stratum.S3, False, True),
    (Stratum.S4, False, False),
)


def stratum_constraints(quotas: tuple[int, int, int, int]) -> tuple[StratumConstraint, ...]:
    """The four canonical constraints carrying this iteration's quotas."""
    return tuple(
        StratumConstraint(stratum, cls_high, loc_high, required_size=q)
        for (stratum, cls_high, loc_high), q in zip(STRATUM_PATTERNS, quotas)
    )


@dataclass(frozen=True, slots=True)
class MiningConfig:
    """All mining tunables; defaults mirror the reference training setup."""

    batch_size: int = 128
    images_per_batch: int = 2
    nms_iou_threshold: float = 0.7
    selection_mode: str = "scalar"
    threshold_quantile: float = 0.5
    threshold_decay: float = 0.99
    schedule_profile: ScheduleProfile = field(default_factory=ScheduleProfile)
    rng_seed: int = 0
    #: When set, (alpha, beta) are pinned and the schedule is bypassed.
    #: (1.0, 1.0) is the plain equal-weight hard-mining baseline.
    frozen_weights: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.batch_size <= 0:
            raise ValueError("batch_size must be > 0")
        if self.images_per_batch <= 0:
            raise ValueError("images_per_batch must be > 0")
        if not (0.0 < self.nms_iou_threshold <= 1.0):
            raise ValueError("nms_iou_threshold must be in (0, 1]")
        if self.selection_mode not in SELECTION_MODES:
            raise ValueError(f"selection_mode must be one of {SELECTION_MODES}")
        if not (0.0 < self.threshold_quantile < 1.0):
            raise ValueError("threshold_quantile must be in (0, 1)")
        if not (0.0 < self.threshold_decay < 1.0):
            raise ValueError("threshold_decay must be in (0, 1)")
        if self.frozen_weights is not None:
            a, b = self.frozen_weights
            if a < 0.0 or b < 0.0 or (a == 0.0 and b == 0.0):
                raise ValueError("frozen_weights must be >= 0 and not both zero")


@dataclass(frozen=True, slots=True)
class SelectedRoi:
    """One selected record in a SelectionResult, with its audit fields."""

    roi_id: int
    image_id: int
    l_select: float
    stratum: Stratum


@dataclass(frozen=True, slots=True)
class SelectionResult:
    """The miner's output for one iteration.

    `selected` is sorted by l_select descending, ties broken by roi_id
    ascending, and never exceeds the configured batch size.
    """

    iteration: int
    selected: tuple[SelectedRoi, ...]
    alpha: float
    beta: float
    suppressed_count: int


# ---------------------------------------------------------------------------
# JSONL wire format (one object per line; see README for the schemas)
# ---------------------------------------------------------------------------


def record_to_dict(record: RoiRecord) -> dict[str, Any]:
    return {
        "iter": record.iteration,
        "image_id": record.image_id,
        "roi_id": record.roi_id,
        "u": record.true_class,
        "p_u": record.p_u,
        "l_cls": record.l_cls,
        "l_loc": record.l_loc,
        "pred": list(record.bbox_pred.as_tuple()),
        "target": list(record.bbox_target.as_tuple()) if record.bbox_target else None,
    }


def record_from_dict(obj: dict[str, Any]) -> RoiRecord:
    target = obj.get("target")
    return RoiRecord(
        roi_id=int(obj["roi_id"]),
        image_id=int(obj["image_id"]),
        iteration=int(obj["iter"]),
        true_class=int(obj["u"]),
        p_u=None if obj.get("p_u") is None else float(obj["p_u"]),
        l_cls=float(obj["l_cls"]),
        l_loc=float(obj["l_loc"]),
        bbox_pred=BBox(*(float(v) for v in obj["pred"])),
        bbox_target=None if target is None else BBox(*(float(v) for v in target)),
    )


def encode_record(record: RoiRecord) -> str:
    return json.dumps(record_to_dict(record), separators=(",", ":"))


def decode_record(line: str) -> RoiRecord:
    return record_from_dict(json.loads(line))


def selection_to_dict(result: SelectionResult) -> dict[str, Any]:
    return {
        "iter": result.iteration,
        "alpha": result.alpha,
        "beta": result.beta,
        "suppressed": result.suppressed_count,
        "selected": [
            {
                "roi_id": s.roi_id,
                "image_id": s.image_id,
                "l_select": s.l_select,
                "stratum": s.stratum.value,
            }
            for s in result.selected
        ],
    }


def selection_from_dict(obj: dict[str, Any]) -> SelectionResult:
    return SelectionResult(
        iteration=int(obj["iter"]),
        alpha=float(obj["alpha"]),
        beta=float(obj["beta"]),
        suppressed_count=int(obj["suppressed"]),
        selected=tuple(
            SelectedRoi(
                roi_id=int(s["roi_id"]),
                image_id=int(s["image_id"]),
                l_select=float(s["l_select"]),
                stratum=Stratum(s["stratum"]),
            )
            for s in obj["selected"]
        ),
    )


def encode_selection(result: SelectionResult) -> str:
    return json.dumps(selection_to_dict(result), separators=(",", ":"))


def decode_selection(line: str) -> SelectionResult:
    return selection_from_dict(json.loads(line))
