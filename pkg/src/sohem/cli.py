"""Command-line front end: replay loss logs, run experiments, window stats.

Exit codes are stable API: 0 success, 2 parse error, 3 record invariant
violation, 4 diverged simulation.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import IO, Sequence

from .errors import DivergedLoss, MiningError
from .harness import EVAL_IOU_THRESHOLDS, TrainerSpec, simulation_profile, train
from .miner import initial_miner, mine
from .records import (
    MiningConfig,
    RoiRecord,
    decode_record,
    encode_selection,
    validate_record,
)
from .schedule import PROFILE_PRESETS, ScheduleProfile, profile

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_DIVERGED = 4

#: config-file keys routed to MiningConfig, with their value parser.
_MINER_KEYS = {
    "batch_size": int,
    "images_per_batch": int,
    "nms_iou_threshold": float,
    "selection_mode": str,
    "threshold_quantile": float,
    "threshold_decay": float,
    "seed": int,
}

#: config-file keys routed to ScheduleProfile.
_SCHEDULE_KEYS = {
    "beta_target": float,
    "ramp_iters": int,
    "window_iters": int,
    "stability_rel_delta": float,
    "stability_windows": int,
    "min_stability_iter": int,
    "ewma_decay": float,
    "auto_ratio_min": float,
    "auto_ratio_max": float,
}


class _CliError(Exception):
    """Internal: carries the exit code and a message for stderr."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def parse_config_text(text: str, origin: str = "config") -> dict[str, object]:
    """Parse flat key=value lines into typed values.

    Blank lines and `#` comments are ignored. Unknown keys and untypeable
    values are parse errors; `profile` and `selection_mode` stay strings,
    `beta_target` accepts `none` for the data-driven profile.
    """
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise _CliError(EXIT_PARSE, f"{origin}:{lineno}: expected key=value, got {raw.strip()!r}")
        if key == "profile":
            if value not in PROFILE_PRESETS:
                raise _CliError(
                    EXIT_PARSE,
                    f"{origin}:{lineno}: profile must be one of {sorted(PROFILE_PRESETS)}",
                )
            values[key] = value
        elif key in _MINER_KEYS or key in _SCHEDULE_KEYS:
            caster = _MINER_KEYS.get(key) or _SCHEDULE_KEYS[key]
            if key == "beta_target" and value.lower() == "none":
                values[key] = None
                continue
            try:
                values[key] = caster(value)
            except ValueError:
                raise _CliError(
                    EXIT_PARSE,
                    f"{origin}:{lineno}: {key} expects {caster.__name__}, got {value!r}",
                ) from None
        else:
            raise _CliError(EXIT_PARSE, f"{origin}:{lineno}: unknown key {key!r}")
    return values


def config_to_text(config: MiningConfig) -> str:
    """Serialize a MiningConfig to the flat key=value config format.

    `parse_config_text` over the result rebuilds an equal configuration;
    frozen weights are not part of the format and come from --mode.
    """
    p = config.schedule_profile
    lines = (
        f"batch_size={config.batch_size}",
        f"images_per_batch={config.images_per_batch}",
        f"nms_iou_threshold={config.nms_iou_threshold}",
        f"selection_mode={config.selection_mode}",
        f"threshold_quantile={config.threshold_quantile}",
        f"threshold_decay={config.threshold_decay}",
        f"seed={config.rng_seed}",
        f"beta_target={'none' if p.beta_target is None else p.beta_target}",
        f"ramp_iters={p.ramp_iters}",
        f"window_iters={p.window_iters}",
        f"stability_rel_delta={p.stability_rel_delta}",
        f"stability_windows={p.stability_windows}",
        f"min_stability_iter={p.min_stability_iter}",
        f"ewma_decay={p.ewma_decay}",
        f"auto_ratio_min={p.auto_ratio_clamp[0]}",
        f"auto_ratio_max={p.auto_ratio_clamp[1]}",
    )
    return "\n".join(lines) + "\n"


def _load_config(path: str | None) -> dict[str, object]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config_text(f.read(), origin=path)
    except OSError as e:
        raise _CliError(EXIT_PARSE, f"cannot read config {path}: {e}") from None


def _build_schedule(values: dict[str, object], profile_flag: str | None,
                    scale_to: int | None = None) -> ScheduleProfile:
    name = profile_flag or values.get("profile")
    if scale_to is not None:
        base = simulation_profile(str(name or "voc07"), scale_to)
    elif name is not None:
        base = profile(str(name))
    else:
        base = ScheduleProfile()
    overrides: dict[str, object] = {
        k: values[k] for k in _SCHEDULE_KEYS if k in values and not k.startswith("auto_ratio")
    }
    lo, hi = base.auto_ratio_clamp
    lo = float(values.get("auto_ratio_min", lo))  # type: ignore[arg-type]
    hi = float(values.get("auto_ratio_max", hi))  # type: ignore[arg-type]
    overrides["auto_ratio_clamp"] = (lo, hi)
    try:
        return dataclasses.replace(base, **overrides)  # type: ignore[arg-type]
    except ValueError as e:
        raise _CliError(EXIT_PARSE, f"bad schedule configuration: {e}") from None


def _build_miner_config(values: dict[str, object], mode_flag: str | None,
                        schedule: ScheduleProfile) -> MiningConfig:
    kwargs: dict[str, object] = {
        k: values[k] for k in _MINER_KEYS if k in values and k != "seed"
    }
    if "seed" in values:
        kwargs["rng_seed"] = values["seed"]
    mode = mode_flag or kwargs.pop("selection_mode", None)
    if mode == "ohem-baseline":
        kwargs["selection_mode"] = "scalar"
        kwargs["frozen_weights"] = (1.0, 1.0)
    elif mode is not None:
        kwargs["selection_mode"] = mode
    try:
        return MiningConfig(schedule_profile=schedule, **kwargs)  # type: ignore[arg-type]
    except ValueError as e:
        raise _CliError(EXIT_PARSE, f"bad mining configuration: {e}") from None


def _read_record_line(raw: str, lineno: int, origin: str) -> RoiRecord:
    try:
        record = decode_record(raw)
    except Exception as e:
        raise _CliError(EXIT_PARSE, f"{origin}:{lineno}: bad record line: {e}") from None
    try:
        validate_record(record)
    except MiningError as e:
        raise _CliError(
            EXIT_INVARIANT,
            f"{origin}:{lineno}: {type(e).__name__} for record roi_id={record.roi_id} "
            f"image_id={record.image_id} iter={record.iteration}: {e}",
        ) from None
    return record


def cmd_replay(log_path: str, config_path: str | None, out_path: str,
               profile_flag: str | None = None, mode_flag: str | None = None,
               stdout: IO[str] | None = None) -> int:
    """Stream a Record JSONL log through the miner, one group per iteration."""
    stdout = stdout or sys.stdout
    values = _load_config(config_path)
    schedule = _build_schedule(values, profile_flag)
    config = _build_miner_config(values, mode_flag, schedule)

    state = initial_miner(config)
    iterations = 0
    total_records = 0
    total_suppressed = 0
    last_alpha, last_beta = config.frozen_weights or (state.schedule.alpha, state.schedule.beta)

    def flush_group(group: list[RoiRecord], sink: IO[str]) -> None:
        nonlocal state, iterations, total_suppressed, last_alpha, last_beta
        try:
            selection, state = mine(state, group)
        except MiningError as e:
            first = group[0]
            raise _CliError(
                EXIT_INVARIANT,
                f"{type(e).__name__} at iteration {first.iteration}: {e}",
            ) from None
        sink.write(encode_selection(selection) + "\n")
        iterations += 1
        total_suppressed += selection.suppressed_count
        last_alpha, last_beta = selection.alpha, selection.beta

    try:
        src = open(log_path, encoding="utf-8")
    except OSError as e:
        raise _CliError(EXIT_PARSE, f"cannot read log {log_path}: {e}") from None
    with src, open(out_path, "w", encoding="utf-8") as sink:
        group: list[RoiRecord] = []
        for lineno, raw in enumerate(src, 1):
            record = _read_record_line(raw, lineno, log_path)
            total_records += 1
            if group and record.iteration != group[0].iteration:
                if record.iteration < group[0].iteration:
                    raise _CliError(
                        EXIT_PARSE,
                        f"{log_path}:{lineno}: iteration {record.iteration} arrives "
                        f"after iteration {group[0].iteration}; records must be "
                        "grouped by non-decreasing iteration",
                    )
                flush_group(group, sink)
                group = []
            group.append(record)
        if group:
            flush_group(group, sink)

    mean_suppressed = total_suppressed / iterations if iterations else 0.0
    stdout.write(
        f"iterations={iterations} records={total_records} "
        f"mean_suppressed={mean_suppressed} "
        f"final_alpha={last_alpha} final_beta={last_beta}\n"
    )
    return EXIT_OK


def cmd_stats(log_path: str, window: int = 1000, stdout: IO[str] | None = None) -> int:
    """Print per-window mean losses as CSV; only complete windows appear.

    A window is `window` consecutive distinct iteration values in file
    order, closed only once the next iteration begins or the file ends; a
    window owns every record of its iterations. Classification is averaged
    over every record, localization over foreground records only (zero when
    a window has none).
    """
    stdout = stdout or sys.stdout
    if window < 1:
        raise _CliError(EXIT_PARSE, "--window must be >= 1")
    try:
        src = open(log_path, encoding="utf-8")
    except OSError as e:
        raise _CliError(EXIT_PARSE, f"cannot read log {log_path}: {e}") from None

    stdout.write("window,end_iteration,mean_l_cls,mean_l_loc\n")
    index = 0
    seen_iters = 0
    current_iter: int | None = None
    cls_sum = 0.0
    cls_n = 0
    loc_sum = 0.0
    loc_n = 0

    def emit() -> None:
        nonlocal index, seen_iters, cls_sum, cls_n, loc_sum, loc_n
        mean_cls = cls_sum / cls_n
        mean_loc = loc_sum / loc_n if loc_n else 0.0
        stdout.write(f"{index},{current_iter},{mean_cls},{mean_loc}\n")
        index += 1
        seen_iters = 0
        cls_sum = loc_sum = 0.0
        cls_n = loc_n = 0

    with src:
        for lineno, raw in enumerate(src, 1):
            try:
                record = decode_record(raw)
            except Exception as e:
                raise _CliError(EXIT_PARSE, f"{log_path}:{lineno}: bad record line: {e}") from None
            if record.iteration != current_iter:
                if seen_iters == window:
                    emit()
                current_iter = record.iteration
                seen_iters += 1
            cls_sum += record.l_cls
            cls_n += 1
            if not record.is_background:
                loc_sum += record.l_loc
                loc_n += 1
        if seen_iters == window:
            emit()
    return EXIT_OK


def cmd_simulate(profile_flag: str | None, mode_flag: str | None, seeds: int,
                 iters: int, out_path: str, config_path: str | None = None,
                 stdout: IO[str] | None = None) -> int:
    """Train the synthetic harness per seed and write the metrics CSV.

    Each row is one completed loss window; the final window row of a seed
    also carries that run's average precision per IoU threshold.
    """
    stdout = stdout or sys.stdout
    if seeds < 1:
        raise _CliError(EXIT_PARSE, "--seeds must be >= 1")
    if iters < 0:
        raise _CliError(EXIT_PARSE, "--iters must be >= 0")
    values = _load_config(config_path)
    schedule = _build_schedule(values, profile_flag, scale_to=max(iters, 1))
    config = _build_miner_config(values, mode_flag, schedule)
    if "batch_size" not in values:
        config = dataclasses.replace(config, batch_size=8)
    spec = TrainerSpec(iterations=iters)
    base_seed = int(values.get("seed", 0))  # type: ignore[arg-type]

    header = ["seed", "window", "end_iteration", "mean_l_cls", "mean_l_loc",
              "alpha", "beta"]
    header += [f"ap_{t}" for t in EVAL_IOU_THRESHOLDS]
    rows: list[list[str]] = []
    for offset in range(seeds):
        seed = base_seed + offset
        try:
            trace = train(config, spec, seed=seed)
        except DivergedLoss as e:
            raise _CliError(EXIT_DIVERGED, f"seed {seed}: {e}") from None
        for w in trace.windows:
            row = [str(seed), str(w.index), str(w.end_iteration),
                   str(w.mean_l_cls), str(w.mean_l_loc), str(w.alpha), str(w.beta)]
            if w is trace.windows[-1]:
                row += [str(trace.ap_by_iou[t]) for t in EVAL_IOU_THRESHOLDS]
            else:
                row += ["", "", ""]
            rows.append(row)
        if trace.windows:
            final = trace.windows[-1]
            ap = " ".join(
                f"ap_{t}={trace.ap_by_iou[t]}" for t in EVAL_IOU_THRESHOLDS
            )
            stdout.write(
                f"seed={seed} windows={len(trace.windows)} "
                f"final_l_cls={final.mean_l_cls} final_l_loc={final.mean_l_loc} "
                f"beta={final.beta} {ap}\n"
            )
        else:
            stdout.write(f"seed={seed} windows=0\n")

    with open(out_path, "w", encoding="utf-8") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sohem",
        description="Stratified online hard example mining: replay, simulate, stats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser("replay", help="mine a recorded loss log iteration by iteration")
    replay.add_argument("--log", required=True, help="Record JSONL input")
    replay.add_argument("--config", help="flat key=value mining configuration")
    replay.add_argument("--out", required=True, help="Selection JSONL output")
    replay.add_argument("--profile", choices=sorted(PROFILE_PRESETS))
    replay.add_argument("--mode", choices=["scalar", "strata", "ohem-baseline"])

    simulate = sub.add_parser("simulate", help="train the synthetic harness and emit metrics CSV")
    simulate.add_argument("--out", required=True, help="metrics CSV output")
    simulate.add_argument("--config", help="flat key=value mining configuration")
    simulate.add_argument("--profile", choices=sorted(PROFILE_PRESETS))
    simulate.add_argument("--mode", choices=["scalar", "strata", "ohem-baseline"])
    simulate.add_argument("--seeds", type=int, default=1, help="number of seeds, base seed from config")
    simulate.add_argument("--iters", type=int, default=20_000, help="training iterations per seed")

    stats = sub.add_parser("stats", help="windowed mean losses of a record log as CSV")
    stats.add_argument("--log", required=True, help="Record JSONL input")
    stats.add_argument("--window", type=int, default=1000, help="iterations per window")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return cmd_replay(args.log, args.config, args.out,
                              profile_flag=args.profile, mode_flag=args.mode)
        if args.command == "simulate":
            return cmd_simulate(args.profile, args.mode, args.seeds, args.iters,
                                args.out, config_path=args.config)
        return cmd_stats(args.log, window=args.window)
    except _CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
