"""Selection-weight schedule: warmup, stability detection, and the beta ramp.

The schedule watches windowed training-loss means, keeps alpha pinned at 1,
and once the total loss has been flat for enough consecutive windows ramps
beta linearly from 0 to its target. It also converts the current ramp
progress into per-stratum sample quotas for stratified selection.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import NonMonotonicIteration

#: Named profiles: fixed beta targets for the two reference training setups,
#: plus an automatic mode that targets the observed cls/loc loss ratio.
PROFILE_PRESETS = {
    "voc07": 1.9,
    "kitti12": 2.3,
    "auto": None,
}

_REL_CHANGE_FLOOR = 1e-12


@dataclass(frozen=True, slots=True)
class ScheduleProfile:
    """Tunables for the beta schedule.

    beta_target None means "auto": the target is the clamped EWMA ratio of
    classification to localization loss, frozen at the moment the ramp starts.
    """

    beta_target: float | None = 1.9
    ramp_iters: int = 10_000
    window_iters: int = 1_000
    stability_rel_delta: float = 0.02
    stability_windows: int = 5
    min_stability_iter: int = 0
    auto_ratio_clamp: tuple[float, float] = (1.0, 4.0)
    ewma_decay: float = 0.99

    def __post_init__(self) -> None:
        if self.beta_target is not None and self.beta_target <= 0.0:
            raise ValueError("beta_target must be positive or None (auto)")
        if self.ramp_iters <= 0 or self.window_iters <= 0 or self.stability_windows <= 0:
            raise ValueError("ramp_iters, window_iters, stability_windows must be > 0")
        if self.stability_rel_delta <= 0.0:
            raise ValueError("stability_rel_delta must be > 0")
        if self.min_stability_iter < 0:
            raise ValueError("min_stability_iter must be >= 0")
        lo, hi = self.auto_ratio_clamp
        if not (0.0 < lo <= hi):
            raise ValueError("auto_ratio_clamp must satisfy 0 < lo <= hi")
        if not (0.0 < self.ewma_decay < 1.0):
            raise ValueError("ewma_decay must be in (0, 1)")

    def scaled(self, total_iters: int, reference_total: int = 80_000) -> "ScheduleProfile":
        """Rescale the iteration-denominated knobs for a shorter run.

        Window and ramp lengths shrink proportionally to total_iters /
        reference_total (with small floors so tiny runs stay well formed).
        """
        if total_iters <= 0:
            return self
        f = total_iters / reference_total
        return replace(
            self,
            ramp_iters=max(10, round(self.ramp_iters * f)),
            window_iters=max(5, round(self.window_iters * f)),
            min_stability_iter=round(self.min_stability_iter * f),
        )


def profile(name: str, **overrides) -> ScheduleProfile:
    """Build a preset profile by name: "voc07" | "kitti12" | "auto"."""
    if name not in PROFILE_PRESETS:
        raise ValueError(f"unknown profile {name!r}; expected one of {sorted(PROFILE_PRESETS)}")
    return ScheduleProfile(beta_target=PROFILE_PRESETS[name], **overrides)


@dataclass(frozen=True, slots=True)
class ScheduleState:
    """Immutable snapshot of the schedule between observations.

    phase is one of "warmup" (alpha, beta) = (1, 0), "ramping" (beta rising
    linearly since ramp_start), and "plateau" (beta pinned at beta_target).
    """

    profile: ScheduleProfile
    phase: str = "warmup"
    alpha: float = 1.0
    beta: float = 0.0
    ramp_start: int | None = None
    beta_target: float | None = None
    window_means_cls: tuple[float, ...] = ()
    window_means_loc: tuple[float, ...] = ()
    win_sum_cls: float = 0.0
    win_sum_loc: float = 0.0
    win_count: int = 0
    ewma_cls: float | None = None
    ewma_loc: float | None = None
    last_iteration: int | None = None


def initial_schedule(prof: ScheduleProfile) -> ScheduleState:
    return ScheduleState(profile=prof)


def completed_windows(state: ScheduleState) -> int:
    return len(state.window_means_cls)


def is_stable(state: ScheduleState, iteration: int) -> bool:
    """Whether windowed total loss has been flat long enough to start the ramp.

    Requires stability_windows consecutive window-over-window relative changes
    below stability_rel_delta, and iteration >= min_stability_iter.
    """
    prof = state.profile
    if iteration < prof.min_stability_iter:
        return False
    m = prof.stability_windows
    totals = [c + l for c, l in zip(state.window_means_cls, state.window_means_loc)]
    if len(totals) < m + 1:
        return False
    for prev, cur in zip(totals[-m - 1 : -1], totals[-m:]):
        rel = abs(cur - prev) / max(abs(prev), _REL_CHANGE_FLOOR)
        if rel >= prof.stability_rel_delta:
            return False
    return True


def _weights_at(phase: str, ramp_start: int | None, beta_target: float | None,
                ramp_iters: int, iteration: int) -> tuple[float, float]:
    if phase == "warmup" or beta_target is None or ramp_start is None:
        return 1.0, 0.0
    frac = min(1.0, max(0.0, (iteration - ramp_start) / ramp_iters))
    return 1.0, beta_target * frac


def current_weights(state: ScheduleState, iteration: int) -> tuple[float, float]:
    """The (alpha, beta) pair in effect at `iteration` given the current phase."""
    return _weights_at(state.phase, state.ramp_start, state.beta_target,
                       state.profile.ramp_iters, iteration)


def observe_losses(state: ScheduleState, iteration: int,
                   mean_l_cls: float, mean_l_loc: float) -> ScheduleState:
    """Fold one iteration's mean losses into the schedule.

    Accumulates the current window, appends completed window means to the
    history ring, applies phase transitions, and stamps the (alpha, beta)
    in effect at `iteration` onto the returned state.
    """
    prof = state.profile
    if state.last_iteration is not None and iteration <= state.last_iteration:
        raise NonMonotonicIteration(
            f"iteration {iteration} after {state.last_iteration}; must strictly increase"
        )

    d = prof.ewma_decay
    ewma_cls = mean_l_cls if state.ewma_cls is None else d * state.ewma_cls + (1 - d) * mean_l_cls
    ewma_loc = mean_l_loc if state.ewma_loc is None else d * state.ewma_loc + (1 - d) * mean_l_loc

    win_sum_cls = state.win_sum_cls + mean_l_cls
    win_sum_loc = state.win_sum_loc + mean_l_loc
    win_count = state.win_count + 1
    means_cls, means_loc = state.window_means_cls, state.window_means_loc
    if win_count == prof.window_iters:
        # Only the last stability_windows + 1 windows are ever inspected.
        keep = prof.stability_windows + 1
        means_cls = (means_cls + (win_sum_cls / win_count,))[-keep:]
        means_loc = (means_loc + (win_sum_loc / win_count,))[-keep:]
        win_sum_cls = win_sum_loc = 0.0
        win_count = 0

    phase, ramp_start, beta_target = state.phase, state.ramp_start, state.beta_target
    candidate = replace(
        state,
        window_means_cls=means_cls,
        window_means_loc=means_loc,
        ewma_cls=ewma_cls,
        ewma_loc=ewma_loc,
    )
    if phase == "warmup" and is_stable(candidate, iteration):
        phase = "ramping"
        ramp_start = iteration
        if prof.beta_target is not None:
            beta_target = prof.beta_target
        else:
            lo, hi = prof.auto_ratio_clamp
            ratio = ewma_cls / max(ewma_loc, _REL_CHANGE_FLOOR)
            beta_target = min(hi, max(lo, ratio))
    if phase == "ramping" and iteration - ramp_start >= prof.ramp_iters:
        phase = "plateau"

    alpha, beta = _weights_at(phase, ramp_start, beta_target, prof.ramp_iters, iteration)
    return replace(
        candidate,
        phase=phase,
        ramp_start=ramp_start,
        beta_target=beta_target,
        alpha=alpha,
        beta=beta,
        win_sum_cls=win_sum_cls,
        win_sum_loc=win_sum_loc,
        win_count=win_count,
        last_iteration=iteration,
    )


def stratum_quotas(state: ScheduleState, batch_size: int,
                   counts: tuple[int, int, int, int],
                   rho: float | None = None) -> tuple[int, int, int, int]:
    """Per-stratum sample quotas (f1, f2, f3, f4) for the current ramp progress.

    rho = beta / beta_target in [0, 1] measures how far the ramp has gone.
    A (0.5 + 0.5*rho) share of the budget goes to the high-localization-loss
    strata (s1, s3) split proportionally to their populations; the remainder
    fills s2 then s4. Quotas a stratum cannot supply spill to the others in
    s1..s4 order, so the quotas always sum to min(batch_size, sum(counts))
    and never exceed the per-stratum populations.

    Pass rho explicitly to bypass the schedule (frozen-weight miners do).
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be > 0")
    if rho is None:
        if state.phase == "warmup" or not state.beta_target:
            rho = 0.0
        else:
            rho = state.beta / state.beta_target
    rho = min(1.0, max(0.0, rho))
    c1, c2, c3, c4 = counts
    total = min(batch_size, c1 + c2 + c3 + c4)

    f_loc = round(batch_size * (0.5 + 0.5 * rho))
    f1 = f3 = 0
    if c1 + c3 > 0:
        f1 = min(c1, round(f_loc * c1 / (c1 + c3)))
        f3 = min(c3, f_loc - f1)
    f2 = min(c2, batch_size - f_loc)
    f4 = min(c4, batch_size - f_loc - f2)

    quotas = [f1, f2, f3, f4]
    deficit = total - sum(quotas)
    for k, cap in enumerate((c1, c2, c3, c4)):
        if deficit <= 0:
            break
        add = min(deficit, cap - quotas[k])
        quotas[k] += add
        deficit -= add
    return tuple(quotas)
