import json
import os

import pytest

from cognitive_radar.cli import RunRequest, main, parse_strategies, validate
from cognitive_radar.errors import ScenarioError
from cognitive_radar.scenario import TargetSpec
from tests.conftest import SCENARIO_DIR, make_config


def _exit_code(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


def _write(path, config):
    path.write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    return str(path)

# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["paper.json", "desk.json"])
def test_shipped_scenarios_validate(name, capsys):
    assert _exit_code(["--scenario", os.path.join(SCENARIO_DIR, name), "--validate"]) == 0
    assert "FAIL" not in capsys.readouterr().out


@pytest.mark.parametrize("preset", ["paper", "desk"])
def test_preset_validates(preset, capsys):
    assert _exit_code(["--preset", preset, "--validate"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_shared_bin_fails_with_rule_and_line(tmp_path, capsys):
    cfg = make_config(targets=[TargetSpec(20.0, 0.0, 1.0, 0.0, snr_db=0.0),
                               TargetSpec(30.0, 0.0, 1.0, 0.0, snr_db=0.0)])
    path = _write(tmp_path / "shared.json", cfg)
    assert _exit_code(["--scenario", path, "--validate"]) == 2
    out = capsys.readouterr().out
    assert "distinct_initial_bins" in out
    assert f"{path}:2: error" in out


def test_target_behind_radar_fails(tmp_path, capsys):
    path = _write(tmp_path / "behind.json",
                  make_config(targets=[TargetSpec(-5.0, 0.0, 10.0, 0.0, snr_db=0.0)]))
    assert _exit_code(["--scenario", path, "--validate"]) == 2
    assert "fov_containment" in capsys.readouterr().out


def test_missing_file_exits_2(tmp_path, capsys):
    assert _exit_code(["--scenario", str(tmp_path / "none.json"), "--validate"]) == 2
    assert "not found" in capsys.readouterr().err


def test_parse_error_is_a_finding(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "targets": [],\n  "n_sim": "many"\n}\n')
    result = validate(str(path))
    assert result.status == "FAIL"
    assert result.findings[0].line == 3

# ---------------------------------------------------------------------------
# Requests
# ---------------------------------------------------------------------------

def test_parse_strategies_normalises_and_dedupes():
    assert parse_strategies("Uniform, power-aware,uniform,") == ["uniform", "power-aware"]


@pytest.mark.parametrize("strategies", [[], ["uniform", "beamforming"]])
def test_run_request_rejects_bad_strategies(strategies):
    with pytest.raises(ScenarioError):
        RunRequest(None, "desk", strategies, None, "out", None, None)


def test_run_request_needs_one_source():
    with pytest.raises(ScenarioError, match="exactly one"):
        RunRequest("a.json", "desk", ["uniform"], None, "out", None, None)


def test_unknown_strategy_exits_2(tmp_path, capsys):
    path = _write(tmp_path / "small.json", make_config())
    code = _exit_code(["--scenario", path, "--strategies", "random", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "unknown strategies" in capsys.readouterr().err


def test_semantic_error_blocks_run(tmp_path):
    path = _write(tmp_path / "behind.json",
                  make_config(targets=[TargetSpec(-5.0, 0.0, 10.0, 0.0, snr_db=0.0)]))
    assert _exit_code(["--scenario", path, "--out", str(tmp_path / "o"), "--no-progress"]) == 2


def test_invalid_runs_is_a_usage_error(capsys):
    assert _exit_code(["--preset", "desk", "--runs", "0"]) == 2


def test_negative_seed_is_a_usage_error(capsys):
    assert _exit_code(["--preset", "desk", "--seed", "-1"]) == 2
    assert "--seed" in capsys.readouterr().err


def test_negative_seed_in_scenario_file_fails(tmp_path, capsys):
    path = _write(tmp_path / "seed.json", make_config(seed=-4))
    assert _exit_code(["--scenario", path, "--validate"]) == 2
    assert "seed" in capsys.readouterr().out

# ---------------------------------------------------------------------------
# End to end
# ---------------------------------------------------------------------------

def test_small_run_writes_all_outputs(tmp_path, capsys):
    path = _write(tmp_path / "small.json", make_config())
    out = tmp_path / "results"
    code = _exit_code(["--scenario", path, "--runs", "1", "--out", str(out),
                       "--no-progress", "--format", "json"])
    assert code == 0
    for strategy in ("orthogonal", "uniform", "power-aware"):
        assert (out / strategy / "steps.csv").is_file()
        assert (out / strategy / "summary.csv").is_file()
    assert (out / "plot_summary.py").is_file()
    report = json.loads((out / "report.json").read_text())
    assert report["metadata"]["n_runs"] == 1
    stdout = capsys.readouterr().out
    assert "Plot script written to:" in stdout
    assert "Report written to:" in stdout


def test_repeated_runs_are_bit_identical(tmp_path):
    path = _write(tmp_path / "small.json", make_config())
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert _exit_code(["--scenario", path, "--strategies", "power-aware", "--runs", "2",
                           "--seed", "11", "--out", str(out), "--no-progress",
                           "--no-report"]) == 0
        outputs.append((out / "power-aware" / "steps.csv").read_bytes())
        assert not (out / "report.md").exists()
    assert outputs[0] == outputs[1]


def test_seed_override_changes_results(tmp_path):
    path = _write(tmp_path / "small.json", make_config())
    outputs = []
    for seed in ("1", "2"):
        out = tmp_path / seed
        _exit_code(["--scenario", path, "--strategies", "uniform", "--runs", "1",
                    "--seed", seed, "--out", str(out), "--no-progress", "--no-report"])
        outputs.append((out / "uniform" / "steps.csv").read_bytes())
    assert outputs[0] != outputs[1]
