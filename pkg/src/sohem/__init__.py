"""Stratified online hard example mining for two-loss detection training.

The package is organized around three layers:

* pure loss and geometry helpers (:mod:`sohem.losses`),
* the mining engine proper: thresholds, schedule, NMS, and the per-batch
  pipeline (:mod:`sohem.strata`, :mod:`sohem.schedule`, :mod:`sohem.nms`,
  :mod:`sohem.miner`),
* a synthetic trainer harness for end-to-end experiments
  (:mod:`sohem.harness`).

All state objects are frozen dataclasses; every step returns a new state, so
runs are replayable from logged records alone.
"""

from .errors import (
    BackgroundWithLocLoss,
    BothWeightsZero,
    ColdThresholds,
    DegenerateBox,
    DivergedLoss,
    DomainError,
    EmptyBatch,
    InconsistentClsLoss,
    MiningError,
    MixedImages,
    NonFiniteLoss,
    NonMonotonicIteration,
)
from .losses import (
    OffsetVector,
    box_to_offsets,
    iou,
    loc_loss,
    log_loss,
    offsets_to_box,
    selection_score,
    smooth_l1,
    smooth_l1_inverse,
)
from .miner import MinerState, initial_miner, mine, mine_stream
from .nms import nms_by_loss
from .records import (
    BBox,
    MiningConfig,
    RoiRecord,
    STRATUM_PATTERNS,
    SelectedRoi,
    SelectionResult,
    Stratum,
    StratumConstraint,
    check_box,
    decode_record,
    decode_selection,
    encode_record,
    encode_selection,
    record_from_dict,
    record_to_dict,
    selection_from_dict,
    selection_to_dict,
    stratum_constraints,
    validate_record,
)
from .schedule import (
    PROFILE_PRESETS,
    ScheduleProfile,
    ScheduleState,
    completed_windows,
    current_weights,
    initial_schedule,
    is_stable,
    observe_losses,
    profile,
    stratum_quotas,
)
from .strata import (
    ThresholdState,
    assign_stratum,
    batch_quantile,
    initial_thresholds,
    stratum_counts,
    update_thresholds,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BackgroundWithLocLoss",
    "BothWeightsZero",
    "ColdThresholds",
    "DegenerateBox",
    "DivergedLoss",
    "DomainError",
    "EmptyBatch",
    "InconsistentClsLoss",
    "MinerState",
    "MiningConfig",
    "MiningError",
    "MixedImages",
    "NonFiniteLoss",
    "NonMonotonicIteration",
    "OffsetVector",
    "PROFILE_PRESETS",
    "RoiRecord",
    "STRATUM_PATTERNS",
    "ScheduleProfile",
    "ScheduleState",
    "SelectedRoi",
    "SelectionResult",
    "Stratum",
    "StratumConstraint",
    "ThresholdState",
    "assign_stratum",
    "batch_quantile",
    "box_to_offsets",
    "check_box",
    "completed_windows",
    "current_weights",
    "decode_record",
    "decode_selection",
    "encode_record",
    "encode_selection",
    "initial_miner",
    "initial_schedule",
    "initial_thresholds",
    "iou",
    "is_stable",
    "loc_loss",
    "log_loss",
    "mine",
    "mine_stream",
    "nms_by_loss",
    "observe_losses",
    "offsets_to_box",
    "profile",
    "record_from_dict",
    "record_to_dict",
    "selection_from_dict",
    "selection_score",
    "selection_to_dict",
    "smooth_l1",
    "smooth_l1_inverse",
    "stratum_constraints",
    "stratum_counts",
    "stratum_quotas",
    "update_thresholds",
    "validate_record",
]
