import io
import json

import numpy as np
import pytest
from conftest import make_record

from sohem import MiningConfig, RoiRecord, decode_record, encode_record
from sohem.cli import (
    EXIT_DIVERGED,
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_PARSE,
    _build_miner_config,
    _build_schedule,
    _CliError,
    cmd_replay,
    cmd_simulate,
    cmd_stats,
    config_to_text,
    main,
    parse_config_text,
)
from sohem.errors import DivergedLoss
from sohem.harness import TrainerSpec, simulation_profile, train
from conftest import unit_box


def write_log(path, records):
    path.write_text("".join(encode_record(r) + "\n" for r in records))


def batch_lines(iteration, n=4, image_id=0):
    return [
        make_record(i, l_cls=0.1 * (i + 1), l_loc=0.05 * (i + 1),
                    iteration=iteration, image_id=image_id)
        for i in range(n)
    ]


class TestConfigParsing:
    def test_typed_values_with_comments(self):
        text = """
        # mining setup
        batch_size = 16
        nms_iou_threshold=0.6   # inline comment
        selection_mode=strata

        beta_target=2.3
        stability_windows=3
        """
        values = parse_config_text(text)
        assert values == {
            "batch_size": 16,
            "nms_iou_threshold": 0.6,
            "selection_mode": "strata",
            "beta_target": 2.3,
            "stability_windows": 3,
        }

    def test_beta_target_none(self):
        assert parse_config_text("beta_target=none") == {"beta_target": None}

    def test_profile_names_checked(self):
        assert parse_config_text("profile=kitti12") == {"profile": "kitti12"}
        with pytest.raises(_CliError) as err:
            parse_config_text("profile=coco", origin="my.cfg")
        assert err.value.code == EXIT_PARSE
        assert "my.cfg:1" in str(err.value)

    def test_unknown_key(self):
        with pytest.raises(_CliError) as err:
            parse_config_text("momentum=0.9")
        assert err.value.code == EXIT_PARSE
        assert "momentum" in str(err.value)

    def test_bad_value_cites_line(self):
        with pytest.raises(_CliError) as err:
            parse_config_text("batch_size=8\nwindow_iters=soon", origin="c")
        assert err.value.code == EXIT_PARSE
        assert "c:2" in str(err.value)

    def test_line_without_equals(self):
        with pytest.raises(_CliError) as err:
            parse_config_text("just words")
        assert err.value.code == EXIT_PARSE

    def test_round_trip_through_text(self):
        config = MiningConfig(
            batch_size=32,
            nms_iou_threshold=0.55,
            selection_mode="strata",
            threshold_quantile=0.6,
            threshold_decay=0.95,
            schedule_profile=simulation_profile("kitti12", 5000),
            rng_seed=9,
        )
        values = parse_config_text(config_to_text(config))
        rebuilt = _build_miner_config(values, None, _build_schedule(values, None))
        assert rebuilt == config

    def test_flags_win_over_config(self):
        values = parse_config_text("profile=kitti12\nselection_mode=scalar")
        schedule = _build_schedule(values, "voc07")
        assert schedule.beta_target == 1.9
        config = _build_miner_config(values, "strata", schedule)
        assert config.selection_mode == "strata"

    def test_baseline_mode_pins_weights(self):
        config = _build_miner_config({}, "ohem-baseline", _build_schedule({}, None))
        assert config.selection_mode == "scalar"
        assert config.frozen_weights == (1.0, 1.0)

    def test_invalid_combination_is_parse_error(self):
        with pytest.raises(_CliError) as err:
            _build_miner_config({"batch_size": 0}, None, _build_schedule({}, None))
        assert err.value.code == EXIT_PARSE


class TestReplay:
    def test_empty_log(self, tmp_path):
        log = tmp_path / "log.jsonl"
        log.write_text("")
        out = tmp_path / "out.jsonl"
        stdout = io.StringIO()
        assert cmd_replay(str(log), None, str(out), stdout=stdout) == EXIT_OK
        assert out.read_text() == ""
        assert stdout.getvalue() == (
            "iterations=0 records=0 mean_suppressed=0.0 final_alpha=1.0 final_beta=0.0\n"
        )

    def test_groups_by_iteration(self, tmp_path):
        log = tmp_path / "log.jsonl"
        write_log(log, batch_lines(0) + batch_lines(1) + batch_lines(2))
        out = tmp_path / "out.jsonl"
        stdout = io.StringIO()
        assert cmd_replay(str(log), None, str(out), stdout=stdout) == EXIT_OK
        lines = out.read_text().splitlines()
        assert [json.loads(l)["iter"] for l in lines] == [0, 1, 2]
        assert stdout.getvalue().startswith("iterations=3 records=12 ")

    def test_malformed_line_cites_position(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        good = encode_record(batch_lines(0, n=1)[0])
        log.write_text(good + "\n{not json\n")
        code = main(["replay", "--log", str(log), "--out", str(tmp_path / "o")])
        assert code == EXIT_PARSE
        assert f"{log}:2" in capsys.readouterr().err

    def test_invariant_violation_names_record(self, tmp_path, capsys):
        bad = RoiRecord(roi_id=9, image_id=1, iteration=3, true_class=0,
                        l_cls=0.4, l_loc=0.2, bbox_pred=unit_box(0))
        log = tmp_path / "log.jsonl"
        write_log(log, [bad])
        code = main(["replay", "--log", str(log), "--out", str(tmp_path / "o")])
        assert code == EXIT_INVARIANT
        err = capsys.readouterr().err
        assert "BackgroundWithLocLoss" in err
        assert "roi_id=9" in err and "image_id=1" in err and "iter=3" in err
        assert f"{log}:1" in err

    def test_out_of_order_iterations(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        write_log(log, batch_lines(5, n=2) + batch_lines(3, n=1))
        code = main(["replay", "--log", str(log), "--out", str(tmp_path / "o")])
        assert code == EXIT_PARSE
        assert f"{log}:3" in capsys.readouterr().err

    def test_missing_log_file(self, tmp_path, capsys):
        code = main(["replay", "--log", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == EXIT_PARSE

    def test_replay_is_deterministic(self, tmp_path):
        log = tmp_path / "log.jsonl"
        rng = np.random.default_rng(3)
        records = []
        for it in range(40):
            for i in range(8):
                records.append(make_record(
                    i, l_cls=float(rng.uniform(0.01, 2.0)),
                    l_loc=float(rng.uniform(0.01, 2.0)),
                    fg=bool(rng.random() < 0.5),
                    image_id=int(rng.integers(0, 2)),
                    iteration=it,
                ))
        write_log(log, records)
        outputs = []
        summaries = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.jsonl"
            stdout = io.StringIO()
            assert cmd_replay(str(log), None, str(out), mode_flag="strata",
                              stdout=stdout) == EXIT_OK
            outputs.append(out.read_bytes())
            summaries.append(stdout.getvalue())
        assert outputs[0] == outputs[1]
        assert summaries[0] == summaries[1]

    def test_baseline_mode_reports_pinned_weights(self, tmp_path):
        log = tmp_path / "log.jsonl"
        write_log(log, batch_lines(0) + batch_lines(1))
        out = tmp_path / "out.jsonl"
        stdout = io.StringIO()
        cmd_replay(str(log), None, str(out), mode_flag="ohem-baseline", stdout=stdout)
        for line in out.read_text().splitlines():
            payload = json.loads(line)
            assert (payload["alpha"], payload["beta"]) == (1.0, 1.0)
        assert "final_alpha=1.0 final_beta=1.0" in stdout.getvalue()

    def test_reproduces_harness_selections(self, tmp_path):
        config = MiningConfig(
            batch_size=8,
            selection_mode="strata",
            schedule_profile=simulation_profile("voc07", 64),
        )
        spec = TrainerSpec(iterations=64, eval_scenes=4)
        rec_path = tmp_path / "records.jsonl"
        sel_path = tmp_path / "selections.jsonl"
        with open(rec_path, "w") as rec, open(sel_path, "w") as sel:
            train(config, spec, seed=11, record_sink=rec, selection_sink=sel)

        cfg_path = tmp_path / "miner.cfg"
        cfg_path.write_text(config_to_text(config))
        out = tmp_path / "replayed.jsonl"
        assert cmd_replay(str(rec_path), str(cfg_path), str(out),
                          stdout=io.StringIO()) == EXIT_OK
        assert out.read_bytes() == sel_path.read_bytes()


class TestStats:
    def test_windowed_means_match_numpy(self, tmp_path):
        rng = np.random.default_rng(8)
        records = []
        for it in range(6):
            for i in range(5):
                records.append(make_record(
                    i, l_cls=float(rng.uniform(0.1, 1.0)),
                    l_loc=float(rng.uniform(0.1, 1.0)),
                    fg=(i % 2 == 0), iteration=it,
                ))
        log = tmp_path / "log.jsonl"
        write_log(log, records)
        stdout = io.StringIO()
        assert cmd_stats(str(log), window=3, stdout=stdout) == EXIT_OK
        lines = stdout.getvalue().splitlines()
        assert lines[0] == "window,end_iteration,mean_l_cls,mean_l_loc"
        assert len(lines) == 3

        for w, line in enumerate(lines[1:]):
            cells = line.split(",")
            chunk = [r for r in records if w * 3 <= r.iteration < (w + 1) * 3]
            cls_mean = np.mean([r.l_cls for r in chunk])
            fg_locs = [r.l_loc for r in chunk if not r.is_background]
            loc_mean = np.mean(fg_locs)
            assert int(cells[0]) == w
            assert int(cells[1]) == w * 3 + 2
            assert float(cells[2]) == pytest.approx(cls_mean, abs=1e-12)
            assert float(cells[3]) == pytest.approx(loc_mean, abs=1e-12)

    def test_incomplete_window_dropped(self, tmp_path):
        log = tmp_path / "log.jsonl"
        write_log(log, [make_record(0, iteration=it) for it in range(999)])
        stdout = io.StringIO()
        assert cmd_stats(str(log), window=1000, stdout=stdout) == EXIT_OK
        assert stdout.getvalue() == "window,end_iteration,mean_l_cls,mean_l_loc\n"

    def test_default_window_via_main(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        write_log(log, [make_record(0, iteration=it) for it in range(1000)])
        assert main(["stats", "--log", str(log)]) == EXIT_OK
        out = capsys.readouterr().out
        assert len(out.splitlines()) == 2

    def test_window_with_no_foreground(self, tmp_path):
        log = tmp_path / "log.jsonl"
        write_log(log, [make_record(i, fg=False, iteration=i) for i in range(4)])
        stdout = io.StringIO()
        cmd_stats(str(log), window=4, stdout=stdout)
        assert stdout.getvalue().splitlines()[1].endswith(",0.0")

    def test_parse_error(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        log.write_text("garbage\n")
        assert main(["stats", "--log", str(log)]) == EXIT_PARSE
        assert f"{log}:1" in capsys.readouterr().err

    def test_window_must_be_positive(self, tmp_path, capsys):
        log = tmp_path / "log.jsonl"
        log.write_text("")
        assert main(["stats", "--log", str(log), "--window", "0"]) == EXIT_PARSE


class TestSimulate:
    def test_zero_iterations_header_only(self, tmp_path):
        out = tmp_path / "metrics.csv"
        stdout = io.StringIO()
        assert cmd_simulate(None, None, seeds=1, iters=0, out_path=str(out),
                            stdout=stdout) == EXIT_OK
        assert out.read_text() == (
            "seed,window,end_iteration,mean_l_cls,mean_l_loc,alpha,beta,"
            "ap_0.5,ap_0.6,ap_0.7\n"
        )
        assert stdout.getvalue() == "seed=0 windows=0\n"

    def test_two_seeds_and_ap_on_final_rows(self, tmp_path):
        out = tmp_path / "metrics.csv"
        assert cmd_simulate("voc07", "strata", seeds=2, iters=120,
                            out_path=str(out), stdout=io.StringIO()) == EXIT_OK
        lines = out.read_text().splitlines()
        rows = [line.split(",") for line in lines[1:]]
        seeds = {row[0] for row in rows}
        assert seeds == {"0", "1"}
        for seed in sorted(seeds):
            seed_rows = [row for row in rows if row[0] == seed]
            *early, last = seed_rows
            assert all(row[7] == row[8] == row[9] == "" for row in early)
            assert all(cell != "" for cell in last[7:])
            assert float(last[7]) >= float(last[8]) >= float(last[9])

    def test_rerun_is_byte_identical(self, tmp_path):
        blobs = []
        stdouts = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.csv"
            stdout = io.StringIO()
            cmd_simulate("voc07", None, seeds=1, iters=100, out_path=str(out),
                         stdout=stdout)
            blobs.append(out.read_bytes())
            stdouts.append(stdout.getvalue())
        assert blobs[0] == blobs[1]
        assert stdouts[0] == stdouts[1]

    def test_diverged_loss_exit_code(self, tmp_path, capsys, monkeypatch):
        def explode(config, spec, seed):
            raise DivergedLoss("window 0 means (2e3, 4e3) exceed 1e3")

        monkeypatch.setattr("sohem.cli.train", explode)
        code = main(["simulate", "--out", str(tmp_path / "m.csv"), "--iters", "50"])
        assert code == EXIT_DIVERGED
        assert "seed 0" in capsys.readouterr().err

    def test_seed_offset_from_config(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("seed=7\n")
        out = tmp_path / "m.csv"
        cmd_simulate(None, None, seeds=2, iters=0, out_path=str(out),
                     config_path=str(cfg), stdout=(buf := io.StringIO()))
        assert buf.getvalue() == "seed=7 windows=0\nseed=8 windows=0\n"

    def test_bad_counts(self, tmp_path, capsys):
        assert main(["simulate", "--out", str(tmp_path / "m"), "--seeds", "0"]) == EXIT_PARSE
        assert main(["simulate", "--out", str(tmp_path / "m"), "--iters", "-1"]) == EXIT_PARSE


class TestParser:
    def test_missing_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_mode_rejected(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["replay", "--log", "x", "--out", "y", "--mode", "ransac"])
        assert exc.value.code == 2
