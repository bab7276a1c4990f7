import json

import pytest

from cognitive_radar.engine import (
    STATUS_FAILED,
    STATUS_OK,
    MetricsRecord,
    MonteCarloResult,
    StepRow,
    summarize,
)
from cognitive_radar.report import (
    CheckResult,
    ConsoleSummary,
    Finding,
    ReportGenerator,
    ReportMetadata,
    RunProgress,
    describe_run,
    final_quarter_mean,
    final_quarter_start,
    format_summary_table,
    scenario_check,
    trend_checks,
    weakest_target,
    write_plot_script,
)
from cognitive_radar.scenario import TargetState

T_MAX = 8


def _record(run_id, strategy, detect_weak, status=STATUS_OK):
    rows = []
    for t in range(T_MAX):
        for m, snr in ((0, 6.0), (1, -2.0)):
            truth = TargetState(20.0, 0.0, 5.0 * (m + 1), 0.0)
            est = TargetState(20.0 + 1.0 / (t + 1), 0.0, 5.0 * (m + 1), 0.0)
            detected = True if m == 0 else detect_weak(t)
            rows.append(StepRow(run_id, t, m, truth, est, 5 + m, 5 + m, detected,
                                12.0, 0.5, snr))
    return MetricsRecord(run_id, strategy, rows, status)


def _result(strategy, detect_weak, n_runs=2):
    records = [_record(i, strategy, detect_weak) for i in range(n_runs)]
    return MonteCarloResult(strategy, records, summarize(records))


@pytest.fixture
def results():
    return {
        "orthogonal": _result("orthogonal", lambda t: False),
        "uniform": _result("uniform", lambda t: t % 2 == 0),
        "power-aware": _result("power-aware", lambda t: True),
    }


def _by_name(checks):
    return {c.name: c for c in checks}

# ---------------------------------------------------------------------------
# Trend checks
# ---------------------------------------------------------------------------

def test_final_quarter_window():
    assert final_quarter_start(8) == 6
    assert final_quarter_start(350) == 350 - 87
    assert final_quarter_start(3) == 2


def test_weakest_target_has_lowest_snr(results):
    assert weakest_target(results) == 1
    assert weakest_target({}) is None


def test_final_quarter_mean(results):
    assert final_quarter_mean(results["uniform"], 1, "pd_mean", T_MAX) == pytest.approx(0.5)
    assert final_quarter_mean(results["uniform"], 0, "pd_mean", T_MAX) == pytest.approx(1.0)


def test_trend_checks_pass_on_expected_ordering(results):
    checks = _by_name(trend_checks(results, T_MAX))
    assert checks["weak_target_advantage"].status == "PASS"
    assert checks["orthogonal_gap"].status == "PASS"
    assert checks["rmse_convergence"].status == "PASS"
    assert "target 1" in checks["weak_target_advantage"].summary


def test_trend_checks_fail_when_uniform_wins(results):
    results["power-aware"] = _result("power-aware", lambda t: False)
    checks = _by_name(trend_checks(results, T_MAX))
    assert checks["weak_target_advantage"].status == "FAIL"
    assert checks["orthogonal_gap"].status == "FAIL"


def test_rmse_that_does_not_shrink_is_reported(results):
    res = results["uniform"]
    for rec in res.records:
        for row in rec.rows:
            row.est_state = TargetState(row.true_state.x + 1.0, 0.0, row.true_state.y, 0.0)
    res.summary = summarize(res.records)
    check = _by_name(trend_checks(results, T_MAX))["rmse_convergence"]
    assert check.status == "FAIL"
    assert {f.source for f in check.findings} == {"uniform"}
    assert {f.target_id for f in check.findings} == {0, 1}
    assert check.findings[0].where == "uniform/target 0"


def test_trend_checks_skip_missing_strategies(results):
    checks = _by_name(trend_checks({"uniform": results["uniform"]}, T_MAX))
    assert checks["weak_target_advantage"].status == "SKIP"
    assert checks["orthogonal_gap"].status == "SKIP"
    assert checks["rmse_convergence"].status == "PASS"


def test_trend_checks_skip_without_rows():
    empty = {"uniform": MonteCarloResult("uniform", [MetricsRecord(0, "uniform", status=STATUS_FAILED)], [])}
    assert {c.status for c in trend_checks(empty, T_MAX)} == {"SKIP"}


def test_scenario_check_statuses():
    problems = [("fov_containment", "error", "target 1 leaves"), ("dt_positive", "warning", "odd")]
    check = scenario_check(problems, "s.json", line_of=lambda rule, msg: 7)
    assert check.status == "FAIL"
    assert [f.line for f in check.findings] == [7, 7]
    assert check.findings[0].description.startswith("[fov_containment]")
    assert scenario_check(problems[1:], "s.json").status == "WARN"
    assert scenario_check([], "s.json").status == "PASS"

# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _generator(results, fmt, min_severity="info"):
    meta = ReportMetadata("small", "2024-01-01", "1.0.0", 3, "analytic", 2,
                          tuple(results))
    checks = trend_checks(results, T_MAX)
    checks.append(CheckResult("scenario", "WARN",
                              [Finding("s.json", "[x] <odd>", "warning", "scenario", line=2)],
                              summary="0 error(s), 1 warning(s)"))
    return ReportGenerator(meta, results, checks, T_MAX, fmt, min_severity)


def test_markdown_report(results):
    text = _generator(results, "md").generate()
    assert text.startswith("# Strategy comparison: small")
    assert "| power-aware | 1 | 1.000 |" in text
    assert "| uniform | 1 | 0.500 |" in text
    assert "### [WARN] scenario" in text


def test_markdown_lists_aborted_runs(results):
    results["uniform"].records.append(_record(9, "uniform", lambda t: True, STATUS_FAILED))
    results["uniform"].records[-1].diagnostic = "failed to acquire targets [1] within 3 dwell(s)"
    text = _generator(results, "md").generate()
    assert "## Aborted runs" in text
    assert "uniform run 9: failed-to-acquire" in text


def test_html_report_escapes(results):
    text = _generator(results, "html").generate()
    assert text.startswith("<!DOCTYPE html>")
    assert "badge-pass" in text
    assert "<odd>" not in text


def test_json_report_structure(results):
    data = json.loads(_generator(results, "json", min_severity="error").generate())
    assert data["metadata"]["strategies"] == ["orthogonal", "uniform", "power-aware"]
    assert data["summary"]["total"] == 4
    assert len(data["metrics"]) == 6
    scenario = [c for c in data["checks"] if c["name"] == "scenario"][0]
    assert scenario["findings"] == []


def test_summary_table(results):
    table = format_summary_table(results, T_MAX).splitlines()
    assert table[0].split()[:2] == ["strategy", "target"]
    assert len(table) == 2 + 6 + 1
    assert table[-1] == "(final-quarter averages, t >= 6)"


def test_console_summary_without_color(results, capsys):
    checks = trend_checks(results, T_MAX)
    ConsoleSummary(checks, use_color=False, results=results, t_max=T_MAX,
                   title="Checks").print_results()
    out = capsys.readouterr().out
    assert "\033[" not in out
    assert "PASS  orthogonal_gap" in out
    assert "power-aware: 2 ok" in out
    assert "target 1  P_D 1.000 *" in out
    assert "target 1  P_D 0.500   " in out
    assert "orthogonal   P_D 0.000 on target 1" in out


def test_console_summary_colors_verdicts_and_lists_findings(capsys):
    finding = Finding("s.json", "[fov_containment] target 0 leaves", "error", "scenario", line=4)
    ConsoleSummary([CheckResult("scenario", "FAIL", [finding])], use_color=True).print_results()
    out = capsys.readouterr().out
    assert "\033[31mFAIL\033[0m  scenario" in out
    assert "error   s.json:4  [fov_containment] target 0 leaves" in out


def test_progress_line_reports_acquisition_and_detections():
    record = MetricsRecord(3, "uniform", _record(3, "uniform", lambda t: t < 2).rows,
                           scan_dwells=2, false_alarms=1)
    assert describe_run("uniform", 1, 4, record) == (
        "[uniform] run 3 (1/4) acquired in 2 dwell(s), 1 scan false alarm(s), P_D 1.00/0.25")


def test_run_progress_writes_to_stderr(capsys):
    line = RunProgress(force=True)
    record = MetricsRecord(3, "uniform", status=STATUS_FAILED,
                           diagnostic="failed to acquire targets [1] within 3 dwell(s)")
    line.run_callback("uniform")(1, 4, record)
    err = capsys.readouterr().err
    assert "[uniform] run 3 (1/4) failed-to-acquire: failed to acquire targets [1]" in err
    RunProgress(enabled=False, force=True).update("hidden")
    assert capsys.readouterr().err == ""


def test_plot_script_compiles(tmp_path):
    summaries = {"uniform": str(tmp_path / "uniform" / "summary.csv")}
    path = write_plot_script(str(tmp_path), summaries, 2)
    text = open(path, encoding="utf-8").read()
    compile(text, path, "exec")
    assert "N_TARGETS = 2" in text
    assert str(tmp_path / "uniform" / "summary.csv") in text
