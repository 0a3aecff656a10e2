"""Dynamic high/low loss thresholds and stratum assignment.

"High" is defined against an EWMA-smoothed running batch quantile so the
boundary tracks the loss distribution as it decays during training, without
any absolute constants. Background records contribute to the classification
quantile but are excluded from the localization one (their l_loc is
identically zero and would drag that threshold to the floor).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import ColdThresholds, EmptyBatch
from .records import RoiRecord, Stratum


@dataclass(frozen=True, slots=True)
class ThresholdState:
    """Current high/low boundaries for the two loss axes."""

    theta_cls: float = 0.0
    theta_loc: float = 0.0
    quantile: float = 0.5
    decay: float = 0.99
    warm: bool = False
    seen_foreground: bool = False


def initial_thresholds(quantile: float = 0.5, decay: float = 0.99) -> ThresholdState:
    if not (0.0 < quantile < 1.0):
        raise ValueError("quantile must be in (0, 1)")
    if not (0.0 < decay < 1.0):
        raise ValueError("decay must be in (0, 1)")
    return ThresholdState(quantile=quantile, decay=decay)


def batch_quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile of a non-empty sequence (numpy semantics)."""
    n = len(values)
    if n == 0:
        raise EmptyBatch("quantile of an empty sequence")
    ordered = sorted(values)
    pos = q * (n - 1)
    lo = int(pos)
    frac = pos - lo
    if frac == 0.0:
        return ordered[lo]
    return ordered[lo] + frac * (ordered[lo + 1] - ordered[lo])


def update_thresholds(state: ThresholdState, batch: Iterable[RoiRecord]) -> ThresholdState:
    """Blend the batch loss quantiles into the running thresholds.

    The first observed batch sets the thresholds directly; afterwards
    theta_new = decay * theta_old + (1 - decay) * batch_quantile. The
    localization quantile only sees foreground records; a batch with no
    foreground leaves theta_loc untouched.
    """
    records = list(batch)
    if not records:
        raise EmptyBatch("cannot update thresholds from an empty batch")

    q_cls = batch_quantile([r.l_cls for r in records], state.quantile)
    fg_loc = [r.l_loc for r in records if not r.is_background]

    d = state.decay
    theta_cls = q_cls if not state.warm else d * state.theta_cls + (1 - d) * q_cls
    theta_loc = state.theta_loc
    seen_fg = state.seen_foreground
    if fg_loc:
        q_loc = batch_quantile(fg_loc, state.quantile)
        theta_loc = q_loc if not seen_fg else d * state.theta_loc + (1 - d) * q_loc
        seen_fg = True
    return replace(
        state, theta_cls=theta_cls, theta_loc=theta_loc, warm=True, seen_foreground=seen_fg
    )


def assign_stratum(record: RoiRecord, state: ThresholdState) -> Stratum:
    """Map a record to its stratum; losses equal to a threshold count as high."""
    if not state.warm:
        raise ColdThresholds("thresholds not warmed up; observe a batch first")
    cls_high = record.l_cls >= state.theta_cls
    loc_high = record.l_loc >= state.theta_loc
    if cls_high:
        return Stratum.S1 if loc_high else Stratum.S2
    return Stratum.S3 if loc_high else Stratum.S4


def stratum_counts(records: Iterable[RoiRecord], state: ThresholdState) -> tuple[int, int, int, int]:
    """Population of each stratum among `records`, in s1..s4 order."""
    counts = {s: 0 for s in Stratum}
    for r in records:
        counts[assign_stratum(r, state)] += 1
    return (counts[Stratum.S1], counts[Stratum.S2], counts[Stratum.S3], counts[Stratum.S4])
