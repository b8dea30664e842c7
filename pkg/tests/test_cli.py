"""End-to-end command line tests: exit codes, outputs, reproducibility."""

import os

import numpy as np
import pytest

from quadmimic.cli import main
from quadmimic.motion import load_motion


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rc = main(["synth", "--gait", "trot", "--speed", "0.3", "--out", str(d)])
    assert rc == 0
    return d


def test_synth_writes_loadable_motion(workdir):
    motion = load_motion(workdir / "trot.csv")
    assert len(motion.com_pos) == 101
    assert motion.cyclic


def test_synth_rejects_bad_speed_with_flag_name(tmp_path, capsys):
    rc = main(["synth", "--gait", "pace", "--speed", "-5", "--out", str(tmp_path)])
    assert rc == 2
    assert "--speed" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["bogus"]) == 1
    assert main(["synth"]) == 1  # --gait is required
    capsys.readouterr()


def test_missing_motion_file_is_data_error(tmp_path, capsys):
    rc = main(["fit", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert rc == 2
    capsys.readouterr()


def test_fit_writes_report_and_refits_identically(workdir, tmp_path):
    src = str(workdir / "trot.csv")
    rc = main(["fit", src, "--out", str(tmp_path)])
    assert rc == 0
    first = (tmp_path / "trot_dmps.json").read_bytes()
    report = (tmp_path / "trot_fit_report.csv").read_text().splitlines()
    assert report[0] == "channel,fit_rmse,degenerate"
    assert len(report) == 25

    rc = main(["fit", src, "--output", str(tmp_path / "again.json"), "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "again.json").read_bytes() == first


def test_rollout_oracle_replay_scores_exactly_one(workdir, tmp_path, capsys):
    rc = main([
        "rollout", str(workdir / "trot.csv"), "--duration", "0.5",
        "--oracle-replay", "--out", str(tmp_path),
    ])
    assert rc == 0
    capsys.readouterr()
    row = (tmp_path / "trot_mbc_summary.csv").read_text().splitlines()[1].split(",")
    assert float(row[2]) == 1.0
    assert row[3] == "Completed"


def test_rollout_both_controllers_and_log(workdir, tmp_path, capsys):
    log = tmp_path / "ticks.csv"
    rc = main([
        "rollout", str(workdir / "trot.csv"), "--duration", "0.5",
        "--log", str(log), "--out", str(tmp_path),
    ])
    assert rc == 0
    rc = main([
        "rollout", str(workdir / "trot.csv"), "--controller", "raibert",
        "--duration", "0.5", "--out", str(tmp_path),
    ])
    assert rc == 0
    capsys.readouterr()
    for name in ("trot_mbc_summary.csv", "trot_raibert_summary.csv"):
        row = (tmp_path / name).read_text().splitlines()[1].split(",")
        assert 0.0 < float(row[2]) <= 1.0
    assert log.read_text().startswith("#")


def test_optimize_writes_history_and_is_seed_reproducible(workdir, tmp_path, capsys):
    src = str(workdir / "trot.csv")
    args = ["optimize", src, "--iters", "1", "--population", "4",
            "--eval-duration", "0.4", "--seed", "3"]
    outs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        rc = main(args + ["--out", str(d)])
        assert rc == 0
        outs.append(d)
    capsys.readouterr()

    history = (outs[0] / "trot_history.csv").read_text().splitlines()
    assert history[0] == "iteration,best_reward,mean_reward,sigma"
    assert len(history) == 3
    assert history[1].startswith("0,")
    best = [float(line.split(",")[1]) for line in history[1:]]
    assert best[1] >= best[0]

    for name in ("trot_optimized.csv", "trot_optimized_dmps.json", "trot_history.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_compare_emits_matrix_and_svg(workdir, tmp_path, capsys):
    rc = main([
        "compare", str(workdir / "trot.csv"), "--duration", "0.5",
        "--iters", "1", "--population", "4", "--eval-duration", "0.4",
        "--out", str(tmp_path),
    ])
    assert rc == 0
    capsys.readouterr()
    rows = (tmp_path / "compare.csv").read_text().splitlines()
    assert rows[0] == "motion,mbc,mbc_dmp,raibert"
    cells = rows[1].split(",")
    assert cells[0] == "trot" and len(cells) == 4
    for v in cells[1:]:
        assert 0.0 <= float(v) <= 1.0
    svg = (tmp_path / "compare.svg").read_text()
    assert svg.startswith("<svg") and "raibert" in svg and "<rect" in svg


def test_compare_requires_motions(capsys):
    assert main(["compare"]) == 1
    capsys.readouterr()


def test_stitch_single_input_is_passthrough(workdir, tmp_path, capsys):
    rc = main([
        "stitch", str(workdir / "trot.csv"),
        "--output", str(tmp_path / "same.csv"), "--out", str(tmp_path),
    ])
    assert rc == 0
    capsys.readouterr()
    a = load_motion(workdir / "trot.csv")
    b = load_motion(tmp_path / "same.csv")
    np.testing.assert_array_equal(a.com_pos, b.com_pos)
    np.testing.assert_array_equal(a.foot_pos, b.foot_pos)
    assert b.cyclic == a.cyclic


def test_stitch_pair_and_dt_mismatch(workdir, tmp_path, capsys):
    rc = main(["synth", "--gait", "pace", "--speed", "0.3", "--out", str(tmp_path)])
    assert rc == 0
    rc = main([
        "stitch", str(tmp_path / "pace.csv"), str(workdir / "trot.csv"),
        "--out", str(tmp_path),
    ])
    assert rc == 0
    stitched = load_motion(tmp_path / "stitched.csv")
    assert len(stitched.com_pos) == 201
    assert not stitched.cyclic

    rc = main(["synth", "--gait", "pace", "--speed", "0.3", "--dt", "0.004",
               "--output", str(tmp_path / "pace4.csv"), "--out", str(tmp_path)])
    assert rc == 0
    rc = main([
        "stitch", str(tmp_path / "pace4.csv"), str(workdir / "trot.csv"),
        "--out", str(tmp_path),
    ])
    assert rc == 2
    capsys.readouterr()


def test_config_file_and_flag_layering(workdir, tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("seed: 7\ncontroller:\n  swing_policy: raibert\n")
    src = str(workdir / "trot.csv")

    rc = main(["rollout", src, "--duration", "0.5", "--config", str(cfg),
               "--out", str(tmp_path)])
    assert rc == 0
    row = (tmp_path / "trot_mbc_summary.csv").read_text().splitlines()[1].split(",")
    assert row[6] == "7"  # seed from config file

    rc = main(["rollout", src, "--duration", "0.5", "--config", str(cfg),
               "--seed", "3", "--out", str(tmp_path)])
    assert rc == 0
    row = (tmp_path / "trot_mbc_summary.csv").read_text().splitlines()[1].split(",")
    assert row[6] == "3"  # flag wins over config file
    capsys.readouterr()


def test_bad_controller_key_in_config(workdir, tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("controller:\n  not_a_field: 1\n")
    rc = main(["rollout", str(workdir / "trot.csv"), "--duration", "0.2",
               "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == 2
    assert "not_a_field" in capsys.readouterr().err


def test_env_var_sets_default_out_dir(workdir, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QUADMIMIC_OUT", str(tmp_path))
    monkeypatch.chdir(tmp_path)
    rc = main(["synth", "--gait", "turn", "--yaw-rate", "0.5"])
    assert rc == 0
    capsys.readouterr()
    assert (tmp_path / "turn.csv").is_file()
