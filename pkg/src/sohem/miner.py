"""The per-batch mining pipeline: dedupe, score, and pick hard examples.

Each call to :func:`mine` runs one iteration: update the loss thresholds and
the weight schedule from the raw batch, score every record, suppress
co-located candidates per image, then keep the top records either globally
(scalar mode) or under per-stratum quotas (strata mode). Selection is fully
deterministic: ties are broken by roi_id, never randomly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Sequence

from . import schedule as sched
from .errors import NonMonotonicIteration
from .losses import selection_score
from .nms import nms_by_loss
from .records import (
    MiningConfig,
    RoiRecord,
    SelectedRoi,
    SelectionResult,
    Stratum,
    validate_record,
)
from .strata import ThresholdState, assign_stratum, initial_thresholds, update_thresholds


@dataclass(frozen=True, slots=True)
class MinerState:
    """Everything the miner carries between iterations."""

    config: MiningConfig
    thresholds: ThresholdState
    schedule: sched.ScheduleState
    iteration: int = 0
    # Reserved for tie-free subsampling variants; selection itself never
    # draws from it, so replays stay bit-identical.
    rng_seed: int = 0


def initial_miner(config: MiningConfig) -> MinerState:
    return MinerState(
        config=config,
        thresholds=initial_thresholds(config.threshold_quantile, config.threshold_decay),
        schedule=sched.initial_schedule(config.schedule_profile),
        rng_seed=config.rng_seed,
    )


def _batch_means(batch: Sequence[RoiRecord]) -> tuple[float, float]:
    """Mean l_cls over all records; mean l_loc over foreground only (0 if none)."""
    total_cls = 0.0
    total_loc = 0.0
    n_fg = 0
    for r in batch:
        total_cls += r.l_cls
        if not r.is_background:
            total_loc += r.l_loc
            n_fg += 1
    return total_cls / len(batch), (total_loc / n_fg) if n_fg else 0.0


def _frozen_rho(config: MiningConfig, beta: float) -> float:
    # Ramp progress proxy when the schedule is bypassed: relate the pinned
    # beta to the profile's target when one exists.
    if beta == 0.0:
        return 0.0
    target = config.schedule_profile.beta_target
    return min(1.0, beta / target) if target else 1.0


def mine(state: MinerState, batch: Sequence[RoiRecord]) -> tuple[SelectionResult, MinerState]:
    """Select up to batch_size hard examples from one iteration's records.

    Returns the selection plus the advanced miner state. An empty batch
    yields an empty result and leaves the state untouched.
    """
    config = state.config
    if not batch:
        alpha, beta = config.frozen_weights or (state.schedule.alpha, state.schedule.beta)
        empty = SelectionResult(
            iteration=state.iteration, selected=(), alpha=alpha, beta=beta, suppressed_count=0
        )
        return empty, state

    iteration = batch[0].iteration
    for r in batch:
        validate_record(r)
        if r.iteration != iteration:
            raise ValueError(
                f"batch spans iterations {iteration} and {r.iteration}; feed one at a time"
            )
    # applies on the frozen path too, where the schedule observer is bypassed
    if iteration < state.iteration:
        raise NonMonotonicIteration(
            f"batch iteration {iteration} precedes miner iteration {state.iteration}"
        )

    thresholds = update_thresholds(state.thresholds, batch)

    if config.frozen_weights is not None:
        schedule_state = state.schedule
        alpha, beta = config.frozen_weights
    else:
        mean_cls, mean_loc = _batch_means(batch)
        schedule_state = sched.observe_losses(state.schedule, iteration, mean_cls, mean_loc)
        alpha, beta = schedule_state.alpha, schedule_state.beta

    groups: dict[int, list[tuple[RoiRecord, float]]] = {}
    for r in batch:
        score = selection_score(r.l_cls, r.l_loc, alpha, beta)
        groups.setdefault(r.image_id, []).append((r, score))

    survivors: list[tuple[RoiRecord, float]] = []
    for image_id in sorted(groups):
        kept = nms_by_loss(groups[image_id], config.nms_iou_threshold)
        survivors.extend((r, selection_score(r.l_cls, r.l_loc, alpha, beta)) for r in kept)
    suppressed = len(batch) - len(survivors)

    labeled = [(r, s, assign_stratum(r, thresholds)) for r, s in survivors]
    chosen = _select(labeled, config, schedule_state, alpha, beta)

    entries = tuple(
        SelectedRoi(roi_id=r.roi_id, image_id=r.image_id, l_select=s, stratum=stratum)
        for r, s, stratum in sorted(chosen, key=lambda t: (-t[1], t[0].roi_id))
    )
    result = SelectionResult(
        iteration=iteration,
        selected=entries,
        alpha=alpha,
        beta=beta,
        suppressed_count=suppressed,
    )
    new_state = replace(
        state, thresholds=thresholds, schedule=schedule_state, iteration=iteration + 1
    )
    return result, new_state


def _select(labeled, config, schedule_state, alpha, beta):
    budget = config.batch_size
    if config.selection_mode == "scalar":
        pool = sorted(labeled, key=lambda t: (-t[1], t[0].roi_id))
        return pool[:budget]

    in_warmup = config.frozen_weights is None and schedule_state.phase == "warmup"
    if in_warmup:
        # Before the ramp the high-l_cls strata are sampled first, pooled:
        # with (alpha, beta) = (1, 0) this equals plain top-k by score.
        pool = sorted(
            labeled,
            key=lambda t: (t[2] not in (Stratum.S1, Stratum.S2), -t[1], t[0].roi_id),
        )
        return pool[:budget]

    by_stratum: dict[Stratum, list] = {s: [] for s in Stratum}
    for item in labeled:
        by_stratum[item[2]].append(item)
    counts = tuple(len(by_stratum[s]) for s in Stratum)
    rho = _frozen_rho(config, beta) if config.frozen_weights is not None else None
    quotas = sched.stratum_quotas(schedule_state, budget, counts, rho=rho)

    chosen = []
    for stratum, quota in zip(Stratum, quotas):
        pool = sorted(by_stratum[stratum], key=lambda t: (-t[1], t[0].roi_id))
        chosen.extend(pool[:quota])
    return chosen


def mine_stream(state: MinerState, batches: Iterable[Sequence[RoiRecord]]) -> Iterator[SelectionResult]:
    """Fold :func:`mine` over an iteration-ordered sequence of batches."""
    for batch in batches:
        result, state = mine(state, batch)
        yield result
