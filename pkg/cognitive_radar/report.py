"""Batch reports, console output, progress line and plot-script emission."""

import html as html_mod
import json
import os
import sys
import textwrap
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from cognitive_radar.engine import (
    STATUS_FAILED,
    STATUS_OK,
    STATUS_TRUNCATED,
    MetricsRecord,
    MonteCarloResult,
)

TOOL_VERSION = "1.0.0"

# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------

@dataclass
class Finding:
    """One problem: a scenario rule with its line, or a strategy/target pair."""

    source: str          # scenario path or strategy name
    description: str
    severity: str        # error, warning, info
    check_name: str
    line: int = 0
    target_id: Optional[int] = None

    @property
    def where(self) -> str:
        if self.line:
            return f"{self.source}:{self.line}"
        if self.target_id is not None:
            return f"{self.source}/target {self.target_id}"
        return self.source


@dataclass
class CheckResult:
    name: str
    status: str          # PASS, FAIL, WARN, SKIP
    findings: List[Finding] = field(default_factory=list)
    summary: str = ""
    elapsed: float = 0.0  # seconds
    target_id: Optional[int] = None
    # final-quarter P_D per strategy for the compared target
    pd: Dict[str, float] = field(default_factory=dict)


@dataclass
class ReportMetadata:
    scenario_name: str
    date: str
    tool_version: str
    seed: int
    mode: str
    n_runs: int
    strategies: Sequence[str] = ()

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

SEVERITY_LEVELS: Dict[str, int] = {"info": 0, "warning": 1, "error": 2}

CHECK_DESCRIPTIONS: Dict[str, str] = {
    "scenario": "Schema and geometry checks of the scenario file",
    "weak_target_advantage": "Power-aware keeps the weakest target at least as well as uniform",
    "orthogonal_gap": "Orthogonal baseline trails both adaptive strategies on the weakest target",
    "rmse_convergence": "Adaptive position RMSE ends below its value at acquisition",
}

ORTHOGONAL_GAP = 0.1


def _filter_findings(findings: List[Finding], min_severity: str) -> List[Finding]:
    floor = SEVERITY_LEVELS.get(min_severity, 0)
    return [f for f in findings if SEVERITY_LEVELS.get(f.severity, 0) >= floor]

# ---------------------------------------------------------------------------
# Run progress on stderr
# ---------------------------------------------------------------------------

# SGR codes for check verdicts and episode outcomes
STATUS_COLORS: Dict[str, str] = {
    "PASS": "32", "FAIL": "31", "WARN": "33", "SKIP": "34",
    STATUS_OK: "32", STATUS_TRUNCATED: "33", STATUS_FAILED: "31",
}


def _paint(text: str, status: str, use_color: bool) -> str:
    code = STATUS_COLORS.get(status)
    if not use_color or code is None:
        return text
    return f"\033[{code}m{text}\033[0m"


def describe_run(strategy: str, done: int, total: int, record: MetricsRecord) -> str:
    """One progress line for a finished episode."""
    head = f"[{strategy}] run {record.run_id} ({done}/{total})"
    if record.status != STATUS_OK:
        detail = f": {record.diagnostic}" if record.diagnostic else ""
        return f"{head} {record.status}{detail}"
    targets = sorted({r.target_id for r in record.rows})
    rates = "/".join(f"{record.detection_rate(m):.2f}" for m in targets)
    return (f"{head} acquired in {record.scan_dwells} dwell(s), "
            f"{record.false_alarms} scan false alarm(s), P_D {rates}")


class RunProgress:
    """Episode progress on stderr, silent when stderr is not a TTY unless forced."""

    def __init__(self, enabled: bool = True, force: bool = False):
        self.enabled = enabled and (force or sys.stderr.isatty())

    def update(self, msg: str) -> None:
        if self.enabled:
            print(msg, file=sys.stderr)

    def run_callback(self, strategy: str):
        """``on_progress`` callback for ``run_monte_carlo``."""
        def _cb(done: int, total: int, record: MetricsRecord) -> None:
            self.update(describe_run(strategy, done, total, record))
        return _cb

# ---------------------------------------------------------------------------
# Trend checks
# ---------------------------------------------------------------------------

def final_quarter_start(t_max: int) -> int:
    return t_max - max(1, t_max // 4)


def final_quarter_mean(result: MonteCarloResult, target_id: int, metric: str,
                       t_max: int) -> float:
    start = final_quarter_start(t_max)
    values = [getattr(r, metric) for r in result.summary
              if r.target_id == target_id and r.t >= start]
    return float(np.mean(values)) if values else float("nan")


def weakest_target(results: Dict[str, MonteCarloResult]) -> Optional[int]:
    """Target with the lowest mean per-channel SNR over all recorded steps."""
    snr: Dict[int, List[float]] = {}
    for res in results.values():
        for rec in res.records:
            for row in rec.rows:
                snr.setdefault(row.target_id, []).append(row.snr_db)
    if not snr:
        return None
    return min(snr, key=lambda m: (float(np.mean(snr[m])), m))


def trend_checks(results: Dict[str, MonteCarloResult], t_max: int,
                 target_id: Optional[int] = None) -> List[CheckResult]:
    """Comparisons between strategies over the final quarter of the horizon."""
    if target_id is None:
        target_id = weakest_target(results)
    if target_id is None:
        return [CheckResult(name, "SKIP", summary="no completed steps")
                for name in ("weak_target_advantage", "orthogonal_gap", "rmse_convergence")]
    pd = {s: final_quarter_mean(r, target_id, "pd_mean", t_max) for s, r in results.items()}
    out = []

    if {"power-aware", "uniform"} <= pd.keys():
        margin = pd["power-aware"] - pd["uniform"]
        out.append(CheckResult(
            "weak_target_advantage", "PASS" if margin >= 0 else "FAIL",
            summary=f"target {target_id}: power-aware {pd['power-aware']:.3f} vs "
                    f"uniform {pd['uniform']:.3f} (margin {margin:+.3f})",
            target_id=target_id, pd={s: pd[s] for s in ("uniform", "power-aware")}))
    else:
        out.append(CheckResult("weak_target_advantage", "SKIP",
                               summary="needs power-aware and uniform"))

    adaptive = [s for s in ("uniform", "power-aware") if s in pd]
    if "orthogonal" in pd and adaptive:
        gaps = {s: pd[s] - pd["orthogonal"] for s in adaptive}
        ok = all(g >= ORTHOGONAL_GAP for g in gaps.values())
        detail = ", ".join(f"{s} {g:+.3f}" for s, g in gaps.items())
        out.append(CheckResult("orthogonal_gap", "PASS" if ok else "FAIL",
                               summary=f"target {target_id}: gap vs orthogonal {detail} "
                                       f"(need >= {ORTHOGONAL_GAP})",
                               target_id=target_id,
                               pd={s: pd[s] for s in ["orthogonal", *adaptive]}))
    else:
        out.append(CheckResult("orthogonal_gap", "SKIP",
                               summary="needs orthogonal and an adaptive strategy"))

    findings = []
    for s in adaptive:
        res = results[s]
        for m in sorted({r.target_id for r in res.summary}):
            start = res.series(m, "pos_rmse")
            if start.size == 0:
                continue
            end = final_quarter_mean(res, m, "pos_rmse", t_max)
            if not end < start[0]:
                findings.append(Finding(
                    s, f"final RMSE {end:.3f} km not below {start[0]:.3f} km at acquisition",
                    "error", "rmse_convergence", target_id=m))
    if not adaptive:
        out.append(CheckResult("rmse_convergence", "SKIP", summary="no adaptive strategy"))
    else:
        out.append(CheckResult("rmse_convergence", "FAIL" if findings else "PASS", findings,
                               summary=f"{len(findings)} target/strategy pair(s) not converged"))
    return out


def scenario_check(problems, path: str, line_of=None) -> CheckResult:
    """Turn ``ScenarioConfig.problems()`` output into a ``CheckResult``."""
    findings = [Finding(path, f"[{rule}] {msg}", sev, "scenario",
                        line=line_of(rule, msg) if line_of else 0)
                for rule, sev, msg in problems]
    errors = sum(1 for f in findings if f.severity == "error")
    warnings = len(findings) - errors
    status = "FAIL" if errors else ("WARN" if warnings else "PASS")
    return CheckResult("scenario", status, findings,
                       summary=f"{errors} error(s), {warnings} warning(s)")

# ---------------------------------------------------------------------------
# Summary table
# ---------------------------------------------------------------------------

def summary_rows(results: Dict[str, MonteCarloResult], t_max: int) -> List[Dict[str, object]]:
    rows = []
    for strategy, res in results.items():
        for m in sorted({r.target_id for r in res.summary}):
            rows.append({
                "strategy": strategy,
                "target": m,
                "pd": final_quarter_mean(res, m, "pd_mean", t_max),
                "pos_rmse": final_quarter_mean(res, m, "pos_rmse", t_max),
                "vel_rmse": final_quarter_mean(res, m, "vel_rmse", t_max),
                "ok": res.count(STATUS_OK),
                "truncated": res.count(STATUS_TRUNCATED),
                "failed": res.count(STATUS_FAILED),
            })
    return rows


def format_summary_table(results: Dict[str, MonteCarloResult], t_max: int) -> str:
    header = (f"{'strategy':<12} {'target':>6} {'P_D':>7} {'pos RMSE':>10} "
              f"{'vel RMSE':>10} {'ok/trunc/fail':>14}")
    lines = [header, "-" * len(header)]
    for r in summary_rows(results, t_max):
        runs = f"{r['ok']}/{r['truncated']}/{r['failed']}"
        lines.append(f"{r['strategy']:<12} {r['target']:>6} {r['pd']:>7.3f} "
                     f"{r['pos_rmse']:>10.4f} {r['vel_rmse']:>10.5f} {runs:>14}")
    lines.append(f"(final-quarter averages, t >= {final_quarter_start(t_max)})")
    return "\n".join(lines)

# ---------------------------------------------------------------------------
# Report generator
# ---------------------------------------------------------------------------

class ReportGenerator:
    """Generate Markdown, HTML, or JSON reports of a strategy comparison."""

    def __init__(self, metadata: ReportMetadata, results: Dict[str, MonteCarloResult],
                 checks: List[CheckResult], t_max: int, fmt: str = "md",
                 min_severity: str = "info"):
        self.meta = metadata
        self.results = results
        self.checks = checks
        self.t_max = t_max
        self.fmt = fmt
        self.min_severity = min_severity

    def generate(self) -> str:
        if self.fmt == "html":
            return self._html()
        if self.fmt == "json":
            return self._json()
        return self._markdown()

    def _stats(self) -> Dict[str, int]:
        return {
            "total": len(self.checks),
            "passed": sum(1 for r in self.checks if r.status == "PASS"),
            "failed": sum(1 for r in self.checks if r.status == "FAIL"),
            "warnings": sum(1 for r in self.checks if r.status == "WARN"),
            "skipped": sum(1 for r in self.checks if r.status == "SKIP"),
        }

    # -- Markdown -----------------------------------------------------------

    def _markdown(self) -> str:
        s = self._stats()
        lines = [
            f"# Strategy comparison: {self.meta.scenario_name}\n",
            f"**Date:** {self.meta.date}  ",
            f"**Tool Version:** {self.meta.tool_version}  ",
            f"**Seed:** {self.meta.seed}  ",
            f"**Mode:** {self.meta.mode}  ",
            f"**Runs per strategy:** {self.meta.n_runs}\n",
            "---\n",
            "## Final-quarter metrics\n",
            "| Strategy | Target | P_D | Position RMSE (km) | Velocity RMSE (km/s) | ok / truncated / failed |",
            "|----------|--------|-----|--------------------|----------------------|-------------------------|",
        ]
        for r in summary_rows(self.results, self.t_max):
            lines.append(f"| {r['strategy']} | {r['target']} | {r['pd']:.3f} | "
                         f"{r['pos_rmse']:.4f} | {r['vel_rmse']:.5f} | "
                         f"{r['ok']} / {r['truncated']} / {r['failed']} |")
        lines += [
            "",
            "## Checks\n",
            f"{s['passed']} passed, {s['failed']} failed, {s['warnings']} warnings, "
            f"{s['skipped']} skipped\n",
            "| Check | Description | Status | Summary |",
            "|-------|-------------|--------|---------|",
        ]
        for r in self.checks:
            summary_text = r.summary.replace("|", "\\|")
            lines.append(f"| {r.name} | {CHECK_DESCRIPTIONS.get(r.name, '')} | "
                         f"{r.status} | {summary_text} |")
        lines.append("")
        for r in self.checks:
            filtered = _filter_findings(r.findings, self.min_severity)
            if not filtered:
                continue
            lines.append(f"### [{r.status}] {r.name}\n")
            for f in filtered:
                lines.append(f"- {f.severity}: `{f.where}` {f.description}")
            lines.append("")
        diagnostics = self._diagnostics()
        if diagnostics:
            lines.append("## Aborted runs\n")
            for strategy, run_id, status, msg in diagnostics:
                lines.append(f"- {strategy} run {run_id}: {status}: {msg}")
            lines.append("")
        lines.append(f"*Generated by cognitive-radar v{TOOL_VERSION} on {self.meta.date}*\n")
        return "\n".join(lines) + "\n"

    def _diagnostics(self):
        return [(s, rec.run_id, rec.status, rec.diagnostic)
                for s, res in self.results.items()
                for rec in res.records if rec.status != STATUS_OK]

    # -- HTML ---------------------------------------------------------------

    def _html(self) -> str:
        s = self._stats()
        metric_rows = "".join(
            f"<tr><td>{_html_escape(r['strategy'])}</td><td>{r['target']}</td>"
            f"<td>{r['pd']:.3f}</td><td>{r['pos_rmse']:.4f}</td><td>{r['vel_rmse']:.5f}</td>"
            f"<td>{r['ok']} / {r['truncated']} / {r['failed']}</td></tr>\n"
            for r in summary_rows(self.results, self.t_max))
        check_rows = "".join(
            f"<tr><td>{_html_escape(r.name)}</td>"
            f"<td>{_html_escape(CHECK_DESCRIPTIONS.get(r.name, ''))}</td>"
            f"<td><span class='badge badge-{r.status.lower()}'>{r.status}</span></td>"
            f"<td>{_html_escape(r.summary)}</td></tr>\n"
            for r in self.checks)
        aborted = "".join(
            f"<li>{_html_escape(st)} run {rid}: {_html_escape(status)}: {_html_escape(msg)}</li>"
            for st, rid, status, msg in self._diagnostics())
        return HTML_TEMPLATE.format(
            scenario=_html_escape(self.meta.scenario_name),
            date=_html_escape(self.meta.date),
            tool_version=_html_escape(self.meta.tool_version),
            seed=self.meta.seed, mode=_html_escape(self.meta.mode), n_runs=self.meta.n_runs,
            passed=s["passed"], failed=s["failed"], warnings=s["warnings"],
            skipped=s["skipped"], metric_rows=metric_rows, check_rows=check_rows,
            aborted=f"<h2>Aborted runs</h2><ul>{aborted}</ul>" if aborted else "")

    # -- JSON ---------------------------------------------------------------

    def _json(self) -> str:
        data = {
            "metadata": {
                "scenario": self.meta.scenario_name,
                "date": self.meta.date,
                "tool_version": self.meta.tool_version,
                "seed": self.meta.seed,
                "mode": self.meta.mode,
                "n_runs": self.meta.n_runs,
                "strategies": list(self.meta.strategies),
            },
            "summary": self._stats(),
            "metrics": summary_rows(self.results, self.t_max),
            "checks": [
                {
                    "name": r.name,
                    "description": CHECK_DESCRIPTIONS.get(r.name, ""),
                    "status": r.status,
                    "summary": r.summary,
                    "elapsed_seconds": round(r.elapsed, 3),
                    "findings": [
                        {"severity": f.severity, "source": f.source, "line": f.line,
                         "target_id": f.target_id,
                         "description": f.description, "check": f.check_name}
                        for f in _filter_findings(r.findings, self.min_severity)
                    ],
                }
                for r in self.checks
            ],
            "aborted_runs": [
                {"strategy": st, "run_id": rid, "status": status, "diagnostic": msg}
                for st, rid, status, msg in self._diagnostics()
            ],
        }
        return json.dumps(data, indent=2, allow_nan=True) + "\n"


def _html_escape(text: str) -> str:
    return html_mod.escape(str(text))


HTML_TEMPLATE = textwrap.dedent("""\
<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="UTF-8">
<title>Strategy comparison: {scenario}</title>
<style>
  :root {{ --bg: #f5f5f5; --card: #fff; --border: #dee2e6; --primary: #16213e; }}
  body {{ font-family: -apple-system, BlinkMacSystemFont, 'Segoe UI', Roboto, sans-serif;
         max-width: 1100px; margin: 0 auto; padding: 20px; background: var(--bg); }}
  h1 {{ border-bottom: 3px solid var(--primary); padding-bottom: 10px; }}
  .metadata {{ background: var(--card); padding: 15px; border-radius: 8px; margin-bottom: 20px; }}
  .metadata span {{ margin-right: 20px; }}
  table {{ width: 100%; border-collapse: collapse; margin: 15px 0; background: var(--card); }}
  th {{ background: var(--primary); color: #fff; padding: 10px 12px; text-align: left; }}
  td {{ padding: 8px 12px; border-bottom: 1px solid var(--border); }}
  .badge {{ padding: 4px 12px; border-radius: 12px; font-size: .85em; font-weight: bold; }}
  .badge-pass {{ background: #d4edda; color: #155724; }}
  .badge-fail {{ background: #f8d7da; color: #721c24; }}
  .badge-warn {{ background: #fff3cd; color: #856404; }}
  .badge-skip {{ background: #e2e3e5; color: #383d41; }}
</style>
</head>
<body>
<h1>Strategy comparison: {scenario}</h1>
<div class="metadata">
  <span><strong>Date:</strong> {date}</span>
  <span><strong>Tool Version:</strong> {tool_version}</span>
  <span><strong>Seed:</strong> {seed}</span>
  <span><strong>Mode:</strong> {mode}</span>
  <span><strong>Runs:</strong> {n_runs}</span>
</div>
<h2>Final-quarter metrics</h2>
<table>
<tr><th>Strategy</th><th>Target</th><th>P_D</th><th>Position RMSE (km)</th>
<th>Velocity RMSE (km/s)</th><th>ok / truncated / failed</th></tr>
{metric_rows}</table>
<h2>Checks</h2>
<p>{passed} passed, {failed} failed, {warnings} warnings, {skipped} skipped</p>
<table>
<tr><th>Check</th><th>Description</th><th>Status</th><th>Summary</th></tr>
{check_rows}</table>
{aborted}
</body>
</html>
""")

# ---------------------------------------------------------------------------
# Console output
# ---------------------------------------------------------------------------

class ConsoleSummary:
    """Terminal view of a batch.

    With ``results`` it first lists run outcomes per strategy and the
    final-quarter metrics per target, marking the best P_D with ``*``; then
    every check with its per-strategy P_D and its findings.
    """

    MAX_FINDINGS = 20

    def __init__(self, checks: List[CheckResult], use_color: bool,
                 results: Optional[Dict[str, MonteCarloResult]] = None, t_max: int = 0,
                 min_severity: str = "info", title: str = "Cognitive radar checks"):
        self.checks = checks
        self.use_color = use_color
        self.results = results or {}
        self.t_max = t_max
        self.min_severity = min_severity
        self.title = title

    def print_results(self) -> None:
        rule = "=" * 60
        print(f"\n{rule}\n  {self.title}\n{rule}\n")
        if self.results:
            self._print_metrics()
        for check in self.checks:
            self._print_check(check)
        print(f"\n{rule}\n")

    def _print_metrics(self) -> None:
        rows = summary_rows(self.results, self.t_max)
        best: Dict[int, float] = {}
        for r in rows:
            if not np.isnan(r["pd"]):
                best[r["target"]] = max(best.get(r["target"], r["pd"]), r["pd"])
        for strategy, res in self.results.items():
            runs = ", ".join(_paint(f"{res.count(st)} {st}", st, self.use_color)
                             for st in (STATUS_OK, STATUS_TRUNCATED, STATUS_FAILED)
                             if res.count(st))
            print(f"  {strategy}: {runs or 'no runs'}")
            for r in rows:
                if r["strategy"] != strategy:
                    continue
                mark = " *" if best.get(r["target"]) == r["pd"] else "  "
                print(f"    target {r['target']}  P_D {r['pd']:.3f}{mark}  "
                      f"pos {r['pos_rmse']:.4f} km  vel {r['vel_rmse']:.5f} km/s")
        print()

    def _print_check(self, check: CheckResult) -> None:
        timing = f"  [{check.elapsed:.2f}s]" if check.elapsed > 0 else ""
        verdict = _paint(f"{check.status:4s}", check.status, self.use_color)
        print(f"  {verdict}  {check.name}  ({check.summary}){timing}")
        for strategy, value in check.pd.items():
            print(f"        {strategy:<12} P_D {value:.3f} on target {check.target_id}")
        if check.status == "PASS":
            return
        filtered = _filter_findings(check.findings, self.min_severity)
        for f in filtered[:self.MAX_FINDINGS]:
            print(f"        {f.severity:7s} {f.where}  {f.description}")
        if len(filtered) > self.MAX_FINDINGS:
            print(f"        ... and {len(filtered) - self.MAX_FINDINGS} more")

# ---------------------------------------------------------------------------
# Plot script
# ---------------------------------------------------------------------------

PLOT_TEMPLATE = '''\
#!/usr/bin/env python3
"""Plot detection probability, position RMSE and velocity RMSE per target.

Generated by cognitive-radar v{version}; reads the summary.csv files below.
Requires matplotlib (pip install 'cognitive-mimo-radar[plot]').
"""

import csv
import sys

import matplotlib.pyplot as plt

SUMMARIES = {summaries!r}
N_TARGETS = {n_targets}
ROWS = (("pd_mean", "Detection probability"),
        ("pos_rmse", "Position RMSE (km)"),
        ("vel_rmse", "Velocity RMSE (km/s)"))


def load(path):
    series = {{}}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            m = int(row["target_id"])
            entry = series.setdefault(m, {{"t": [], **{{k: [] for k, _ in ROWS}}}})
            entry["t"].append(int(row["t"]))
            for key, _ in ROWS:
                entry[key].append(float(row[key]))
    return series


def main():
    fig, axes = plt.subplots(len(ROWS), N_TARGETS, figsize=(4 * N_TARGETS, 9),
                             squeeze=False, sharex=True)
    for strategy, path in SUMMARIES.items():
        data = load(path)
        for m in range(N_TARGETS):
            if m not in data:
                continue
            for r, (key, label) in enumerate(ROWS):
                ax = axes[r][m]
                ax.plot(data[m]["t"], data[m][key], label=strategy)
                ax.set_ylabel(label)
                if r == 0:
                    ax.set_title(f"Target {{m + 1}}")
                if r == len(ROWS) - 1:
                    ax.set_xlabel("Time step")
    axes[0][0].legend()
    fig.tight_layout()
    out = sys.argv[1] if len(sys.argv) > 1 else "{default_png}"
    fig.savefig(out, dpi=150)
    print(f"Figure written to: {{out}}")


if __name__ == "__main__":
    main()
'''


def write_plot_script(out_dir: str, summaries: Dict[str, str], n_targets: int) -> str:
    """Write ``plot_summary.py`` with the summary paths embedded."""
    path = os.path.join(out_dir, "plot_summary.py")
    text = PLOT_TEMPLATE.format(
        version=TOOL_VERSION,
        summaries={k: os.path.abspath(v) for k, v in summaries.items()},
        n_targets=n_targets,
        default_png=os.path.join(os.path.abspath(out_dir), "summary.png"),
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.chmod(path, 0o755)
    return path
