"""Tests for the command-line runner: config parsing with exhaustive
violation reporting, per-experiment outputs, manifests, determinism, and
exit codes."""

import hashlib
import json
import math

import numpy as np
import pytest

from ouflow.cli import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    RunConfig,
    config_help,
    main,
    parse_config,
    render_report,
    run_experiment,
    smooth_field,
)
from ouflow.dynamics import PathRecord, simulate_coupled
from ouflow.estimates import TrapParams, energy_ball_exit_bound
from ouflow.forcing import trajectory_seed
from ouflow.lattice import ModeField


# --- config parsing ---


def test_minimal_config_gets_documented_defaults():
    cfg = parse_config("")
    assert cfg.experiment == "simulate"
    assert cfg.sim.nu == 1.0
    assert cfg.sim.alpha == 3.0
    assert cfg.sim.n == 8
    assert cfg.ensemble_size == 8
    assert cfg.format == "json"
    assert cfg.trap is None
    # every key appears in the canonical rendering and in --help
    for key in ("nu", "alpha", "compare_modes", "burn_in_t"):
        assert any(line.startswith(f"{key} =") for line in cfg.canonical.splitlines())
        assert key in config_help()
    assert cfg.config_sha256 == hashlib.sha256(cfg.canonical.encode()).hexdigest()


def test_all_violations_reported_not_first_only():
    text = "alpha = 1.5\nmystery = 3\nnu = -2.0\nformat = yaml\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    messages = err.value.violations
    assert any("alpha >= 2 required" in m for m in messages)
    assert any("unknown key 'mystery'" in m for m in messages)
    assert any("nu must be positive" in m for m in messages)
    assert any("format" in m for m in messages)
    assert len(messages) >= 4


def test_malformed_duplicate_and_empty_lines():
    text = "nu 2.0\nalpha = 3\nalpha = 4\ndt =\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    messages = "\n".join(err.value.violations)
    assert "expected 'key = value'" in messages
    assert "duplicate key 'alpha'" in messages
    assert "empty value for 'dt'" in messages


def test_comments_and_blank_lines_ignored():
    cfg = parse_config("# preamble\n\nnu = 2.5  # inline note\n")
    assert cfg.sim.nu == 2.5


def test_gamma_window_enforced_for_girsanov_only():
    text = "alpha = 3.0\ngamma = 3.6\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, {"experiment": "girsanov"})
    assert any("admissible stopping window" in m for m in err.value.violations)
    # the same gamma is fine for simulate
    assert parse_config(text, {"experiment": "simulate"}).gamma == 3.6
    ok = parse_config("alpha = 3.0\ngamma = 3.25\n", {"experiment": "girsanov"})
    assert ok.experiment == "girsanov"


def test_compare_keys_validated_only_for_compare():
    text = "truncation_n = 3\ndt = 5e-3\nhorizon_t = 0.05\n"
    # default compare_modes reach |k| = 4: invalid for compare at n = 3 ...
    with pytest.raises(ConfigError) as err:
        parse_config(text, {"experiment": "compare"})
    msgs = "\n".join(err.value.violations)
    assert "not a nonzero mode of the truncation" in msgs
    assert "autocov_lags exceeds" in msgs
    # ... but irrelevant (and ignored) for simulate
    assert parse_config(text, {"experiment": "simulate"}).sim.n == 3


def test_compare_modes_ordering_and_zero_mode():
    base = "truncation_n = 4\nalpha = 3.0\n"
    with pytest.raises(ConfigError):
        parse_config(base + "compare_modes = 2,0 1,0\n", {"experiment": "compare"})
    with pytest.raises(ConfigError):
        parse_config(base + "compare_modes = 0,0 1,0\n", {"experiment": "compare"})


def test_estimates_cross_constraints():
    with pytest.raises(ConfigError) as err:
        parse_config(
            "alpha = 2.0\nalpha_prime = 4.0\neta = 0.5\n",
            {"experiment": "estimates"},
        )
    msgs = "\n".join(err.value.violations)
    assert "alpha_prime cannot exceed alpha" in msgs
    assert "eta must exceed 1" in msgs
    cfg = parse_config(
        "alpha = 6.0\nalpha_prime = 2.0\ngamma = 2.0\nnu = 4.0\n",
        {"experiment": "estimates"},
    )
    assert isinstance(cfg.trap, TrapParams)
    assert cfg.trap.cutoff >= 1


def test_stationary_burn_in_feasibility():
    text = "windows = 2\nhorizon_t = 0.1\ndt = 1e-2\nburn_in_t = 0.19\nbatch_count = 8\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, {"experiment": "stationary"})
    assert any("2*batch_count" in m for m in err.value.violations)


def test_horizon_must_be_integer_steps():
    with pytest.raises(ConfigError) as err:
        parse_config("dt = 3e-3\nhorizon_t = 0.01\n")
    assert any("integer number of dt steps" in m for m in err.value.violations)


def test_overrides_win_and_change_the_hash():
    a = parse_config("master_seed = 1\n")
    b = parse_config("master_seed = 1\n", {"master_seed": "2"})
    assert b.master_seed == 2
    assert a.config_sha256 != b.config_sha256


# --- simulate end to end ---


def sim_cfg(tmp_path, name="sim.cfg", extra=""):
    path = tmp_path / name
    path.write_text(
        "truncation_n = 3\ndt = 5e-3\nhorizon_t = 0.05\nensemble_size = 2\n" + extra
    )
    return path


def test_simulate_outputs_manifest_and_replay(tmp_path):
    cfg_path = sim_cfg(tmp_path)
    out = tmp_path / "out"
    code = main(
        ["simulate", "--config", str(cfg_path), "--out", str(out), "--seed", "9"]
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "simulate"
    assert manifest["master_seed"] == 9
    assert manifest["trajectory_seeds"] == [
        trajectory_seed(9, 0),
        trajectory_seed(9, 1),
    ]
    assert manifest["blowups"] == []
    names = {o["name"] for o in manifest["outputs"]}
    assert "summary.json" in names
    assert "traj_0000_omega.jsonl" in names and "traj_0001_z.jsonl" in names
    # digests in the manifest match the bytes on disk
    for entry in manifest["outputs"]:
        data = (out / entry["name"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
        assert len(data) == entry["bytes"]
    # saved trajectory replays bit-identically from its recorded seed
    cfg = parse_config(cfg_path.read_text(), {"master_seed": "9"})
    direct = simulate_coupled(
        ModeField(3), cfg.sim, seed=manifest["trajectory_seeds"][1]
    )
    loaded = PathRecord.load_jsonl(out / "traj_0001_omega.jsonl")
    assert np.array_equal(loaded.states[-1].amp, direct.omega.states[-1].amp)
    assert np.array_equal(loaded.times, direct.omega.times)


def test_simulate_repeat_runs_are_bit_identical(tmp_path):
    cfg_path = sim_cfg(tmp_path)
    digests = []
    for label, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / label
        code = main(
            [
                "simulate",
                "--config",
                str(cfg_path),
                "--out",
                str(out),
                "--workers",
                workers,
            ]
        )
        assert code == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        digests.append({o["name"]: o["sha256"] for o in manifest["outputs"]})
    assert digests[0] == digests[1] == digests[2]


def test_simulate_empty_ensemble_succeeds(tmp_path):
    cfg_path = sim_cfg(tmp_path)
    out = tmp_path / "empty"
    code = main(
        [
            "simulate",
            "--config",
            str(cfg_path),
            "--out",
            str(out),
            "--ensemble",
            "0",
        ]
    )
    assert code == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outputs"] == [] and manifest["trajectory_seeds"] == []


def test_simulate_stride_and_noise_dump(tmp_path):
    cfg_path = sim_cfg(tmp_path)
    out = tmp_path / "noisy"
    code = main(
        [
            "simulate",
            "--config",
            str(cfg_path),
            "--out",
            str(out),
            "--ensemble",
            "1",
            "--save-every",
            "5",
            "--dump-noise",
        ]
    )
    assert code == EXIT_OK
    omega_rows = (out / "traj_0000_omega.jsonl").read_text().splitlines()
    # 10 steps -> 11 slices, strided by 5 -> indices 0, 5, 10
    assert len(omega_rows) == 3
    noise_rows = (out / "traj_0000_noise.jsonl").read_text().splitlines()
    assert len(noise_rows) == 10
    first = json.loads(noise_rows[0])
    assert first["dt"] == pytest.approx(5e-3)


def test_blowup_exit_code_and_manifest_record(tmp_path):
    cfg_path = tmp_path / "blow.cfg"
    cfg_path.write_text(
        "truncation_n = 3\nnu = 1e-4\nalpha = 2.0\ndt = 0.05\nhorizon_t = 2.0\n"
        "forcing_amplitude = 300.0\nensemble_size = 1\n"
    )
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(cfg_path), "--out", str(out)])
    assert code == EXIT_NUMERICAL
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["blowups"]) == 1
    assert manifest["blowups"][0]["index"] == 0
    assert manifest["blowups"][0]["time"] > 0


def test_missing_config_file_is_config_error(tmp_path, capsys):
    code = main(["simulate", "--config", str(tmp_path / "nope.cfg")])
    assert code == EXIT_CONFIG
    assert "not found" in capsys.readouterr().out


def test_invalid_config_lists_all_violations(tmp_path, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("alpha = 1.5\nwidgets = 9\n")
    code = main(["simulate", "--config", str(cfg_path)])
    assert code == EXIT_CONFIG
    text = capsys.readouterr().out
    assert "alpha >= 2 required" in text
    assert "unknown key 'widgets'" in text


# --- compare ---


def compare_cfg(tmp_path):
    path = tmp_path / "cmp.cfg"
    path.write_text(
        "truncation_n = 4\ndt = 2e-3\nhorizon_t = 0.1\nensemble_size = 5\n"
        "alpha = 4.0\ncompare_modes = 1,0 2,0 3,0\nautocov_lags = 10\n"
    )
    return path


def test_compare_emits_pinned_csv_schemas(tmp_path):
    out = tmp_path / "out"
    code = main(["compare", "--config", str(compare_cfg(tmp_path)), "--out", str(out)])
    assert code == EXIT_OK
    trend_lines = (out / "compare_trend.csv").read_text().splitlines()
    assert trend_lines[0] == "k1,k2,min_k,functional,estimate,stderr,n_paths"
    assert len(trend_lines) == 1 + 3
    for line in trend_lines[1:]:
        fields = line.split(",")
        assert fields[3] == "sup_norm_clamp"
        assert int(fields[6]) == 5
    acov_lines = (out / "compare_autocov.csv").read_text().splitlines()
    assert acov_lines[0] == "k1,k2,lag,autocov_re,autocov_im"
    assert len(acov_lines) == 1 + 10
    assert [line.split(",")[2] for line in acov_lines[1:]] == [
        str(lag) for lag in range(10)
    ]
    summary = json.loads((out / "compare_summary.json").read_text())
    assert {"rows", "decreasing", "no_significant_increase"} <= set(summary)
    assert [row["min_k"] for row in summary["rows"]] == [1.0, 2.0, 3.0]


def test_compare_check_failure_exits_4(tmp_path):
    # 3 short weakly-dissipative paths cannot certify a significant decrease
    cfg_path = tmp_path / "cf.cfg"
    cfg_path.write_text(
        "truncation_n = 3\ndt = 2e-3\nhorizon_t = 0.1\nensemble_size = 3\n"
        "alpha = 4.0\ncompare_modes = 1,0 2,0\nautocov_lags = 5\n"
    )
    code = main(
        [
            "compare",
            "--config",
            str(cfg_path),
            "--out",
            str(tmp_path / "out"),
            "--check",
        ]
    )
    assert code == EXIT_CHECK


# --- girsanov ---


def test_girsanov_json_payload(tmp_path):
    cfg_path = tmp_path / "gir.cfg"
    cfg_path.write_text(
        "truncation_n = 3\ndt = 2e-3\nhorizon_t = 0.1\nensemble_size = 6\n"
        "alpha = 3.0\ngamma = 3.25\n"
    )
    out = tmp_path / "out"
    code = main(["girsanov", "--config", str(cfg_path), "--out", str(out)])
    assert code == EXIT_OK
    payload = json.loads((out / "girsanov.json").read_text())
    assert payload["drift_difference"] == "sns_vs_ou"
    assert payload["n_paths"] == 6
    assert payload["novikov_mean"] >= 0
    assert payload["novikov_se"] >= 0
    assert sum(s["count"] for s in payload["strata"]) == 6
    # p = 2 gamma - 2 decay - 2 for the quadratic-drift flavor
    assert payload["entropy_estimate"]["exponent_p"] == pytest.approx(
        2 * 3.25 - 2 * 2.0 - 2.0
    )
    assert payload["entropy_estimate"]["classification"] == "diverging"
    assert payload["entropy_estimate"]["mean"] == pytest.approx(
        payload["novikov_mean"] / 2.0, rel=1e-9
    )  # no path hits the default threshold on this quiet run


# --- estimates ---


def test_estimates_constants_match_library(tmp_path):
    cfg_path = tmp_path / "est.cfg"
    cfg_path.write_text(
        "alpha = 6.0\nalpha_prime = 2.0\ngamma = 2.0\nnu = 4.0\n"
        "energy = 1.0\neta = 20.0\nhorizon_t = 0.1\ndt = 1e-3\n"
    )
    out = tmp_path / "out"
    code = main(
        ["estimates", "--config", str(cfg_path), "--out", str(out), "--check"]
    )
    assert code == EXIT_OK
    payload = json.loads((out / "constants.json").read_text())
    tp = TrapParams.derive(
        gamma=2.0, amp_radius=1.0, energy=1.0, eta=20.0, alpha_prime=2.0, nu=4.0
    )
    assert payload["inner_band_constant"] == pytest.approx(tp.inner_const)
    assert payload["tail_band_constant"] == pytest.approx(tp.tail_const)
    assert payload["envelope_constant"] == pytest.approx(tp.envelope)
    assert payload["cutoff_wavenumber"] == tp.cutoff
    assert payload["combined_radius"] == pytest.approx(tp.combined_radius)
    cfg = parse_config(cfg_path.read_text(), {"experiment": "estimates"})
    expected = energy_ball_exit_bound(1.0, 20.0, 0.1, cfg.sim)
    assert payload["energy_ball_exit_bound"] == {
        "defined": True,
        "value": pytest.approx(expected),
    }


def test_estimates_csv_format(tmp_path):
    cfg_path = tmp_path / "est.cfg"
    cfg_path.write_text("alpha = 6.0\ngamma = 2.0\n")
    out = tmp_path / "out"
    code = main(
        [
            "estimates",
            "--config",
            str(cfg_path),
            "--out",
            str(out),
            "--format",
            "csv",
        ]
    )
    assert code == EXIT_OK
    lines = (out / "constants.csv").read_text().splitlines()
    assert lines[0] == "constant,value"
    keys = {line.split(",")[0] for line in lines[1:]}
    assert "envelope_constant" in keys and "cutoff_wavenumber" in keys


# --- stationary ---


def test_stationary_end_to_end(tmp_path):
    cfg_path = tmp_path / "sta.cfg"
    cfg_path.write_text(
        "truncation_n = 3\ndt = 5e-3\nhorizon_t = 0.25\nwindows = 4\n"
        "burn_in_t = 0.25\nbatch_count = 4\nalpha = 2.0\nstart_amplitude = 2.0\n"
    )
    out = tmp_path / "out"
    code = main(
        [
            "stationary",
            "--config",
            str(cfg_path),
            "--out",
            str(out),
            "--format",
            "csv",
        ]
    )
    assert code == EXIT_OK
    payload = json.loads((out / "stationary.json").read_text())
    assert payload["runs"] == ["zero", "smooth", "reference"]
    assert {c["name"] for c in payload["comparisons"]} >= {"enstrophy", "mode_sq_1_0"}
    for comp in payload["comparisons"]:
        assert len(comp["means"]) == 2
        assert comp["reference"] is not None
    series = (out / "series_zero.csv").read_text().splitlines()
    assert series[0].startswith("t,")
    assert len(series) == 1 + 4 * 50 + 1  # header + windows*steps + initial slice
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["trajectory_seeds"]) == 3


def test_smooth_field_shape():
    f = smooth_field(3, 2.0)
    assert f.value(1, 0) == pytest.approx(2.0)
    assert f.value(2, 0) == pytest.approx(0.5)
    assert f.value(-1, -1) == pytest.approx(1.0)


# --- report ---


def test_report_names_missing_files(tmp_path):
    cfg_path = sim_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    (out / "traj_0001_omega.jsonl").unlink()
    with pytest.raises(FileNotFoundError) as err:
        render_report(manifest, out)
    assert "traj_0001_omega.jsonl" in str(err.value)


def test_run_experiment_api_returns_manifest(tmp_path):
    cfg = parse_config(
        "truncation_n = 2\ndt = 5e-3\nhorizon_t = 0.05\nensemble_size = 1\n"
        f"output_dir = {tmp_path / 'api'}\n"
    )
    manifest, code = run_experiment(cfg)
    assert code == EXIT_OK
    assert manifest.experiment == "simulate"
    assert manifest.config_sha256 == cfg.config_sha256
    assert (tmp_path / "api" / "manifest.json").exists()
    text = render_report(manifest.to_json(), tmp_path / "api")
    assert "terminal enstrophy" in text
