"""Command-line behaviour: flags, messages and exit codes."""

import json
from pathlib import Path

import pytest

from lecollapse.cli import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_SUCCESS,
    EXIT_TIMEOUT,
    main,
)


def fast_collapse_args(tmp_path, *extra):
    cfg = tmp_path / "fast.cfg"
    cfg.write_text(
        "mode = collapse\nextent = 16.0\nrate_calibration = 20000\n"
    )
    return ["collapse", "--config", str(cfg), "--out", str(tmp_path / "out"),
            *extra]


def test_success_exit_and_message(tmp_path, capsys):
    rc = main(fast_collapse_args(tmp_path))
    assert rc == EXIT_SUCCESS
    out = capsys.readouterr().out
    assert "collapse: success" in out
    assert "manifest.json" in out


def test_exit_codes_are_the_documented_values():
    assert (EXIT_SUCCESS, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TIMEOUT) == (0, 2, 3, 4)


def test_config_error_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mode = collapse\nw = -1\n")
    rc = main(["collapse", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, capsys):
    rc = main(["collapse", "--config", str(tmp_path / "nope.cfg"),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG


def test_mode_conflict_between_file_and_subcommand_exits_2(tmp_path, capsys):
    cfg = tmp_path / "wave.cfg"
    cfg.write_text("mode = wave\n")
    rc = main(["collapse", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "mode" in capsys.readouterr().err


def test_numerical_blowup_exits_3(tmp_path, capsys):
    # a 10 tau step with strong couplings trips the divergence watchdog
    cfg = tmp_path / "diverge.cfg"
    cfg.write_text(
        "mode = exact\ndt = 10.0\nt_final = 100.0\n"
        "u_strength = 5.0\nv_strength = 5.0\n"
    )
    rc = main(["exact", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == EXIT_NUMERICAL
    assert "numerical error" in capsys.readouterr().err
    # the error manifest was still committed
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == "error"
    assert manifest["partial"] is True


def test_timeout_exits_4(tmp_path, capsys):
    rc = main(fast_collapse_args(tmp_path, "--max-steps", "5"))
    assert rc == EXIT_TIMEOUT
    assert "timeout" in capsys.readouterr().out


def test_seed_flag_reaches_the_run(tmp_path):
    rc = main(fast_collapse_args(tmp_path, "--seed", "9"))
    assert rc == EXIT_SUCCESS
    record = json.loads((tmp_path / "out" / "run.json").read_text())
    assert record["seed"] == 9


def test_seeds_flag_drives_a_sweep(tmp_path):
    cfg = tmp_path / "fast.cfg"
    cfg.write_text(
        "mode = sweep\nextent = 16.0\nrate_calibration = 20000\n"
    )
    rc = main(["sweep", "--config", str(cfg), "--seeds", "0..3",
               "--out", str(tmp_path / "s")])
    assert rc == EXIT_SUCCESS
    born = json.loads((tmp_path / "s" / "born.json").read_text())
    assert born["n_results"] == 4


def test_formats_flag_limits_outputs(tmp_path):
    rc = main(fast_collapse_args(tmp_path, "--formats", "json"))
    assert rc == EXIT_SUCCESS
    names = {p.name for p in (tmp_path / "out").iterdir()}
    assert names == {"run.json", "manifest.json"}


def test_trajectory_flag_adds_the_walk_csv(tmp_path):
    rc = main(fast_collapse_args(tmp_path, "--trajectory"))
    assert rc == EXIT_SUCCESS
    assert (tmp_path / "out" / "trajectory.csv").exists()


def test_defaults_run_without_a_config_file(tmp_path):
    rc = main(["fp", "--out", str(tmp_path / "fp")])
    assert rc == EXIT_SUCCESS
    assert (tmp_path / "fp" / "summary.json").exists()
