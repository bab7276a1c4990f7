"""Command-line front end: validate scenarios, run strategy comparisons,
write CSVs, a plot script and a report.
"""

import argparse
import datetime
import os
import sys
import textwrap
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from cognitive_radar.engine import MonteCarloResult, run_monte_carlo
from cognitive_radar.errors import CognitiveRadarError, ScenarioError
from cognitive_radar.report import (
    TOOL_VERSION,
    CheckResult,
    ConsoleSummary,
    Finding,
    ReportGenerator,
    ReportMetadata,
    RunProgress,
    format_summary_table,
    scenario_check,
    trend_checks,
    write_plot_script,
)
from cognitive_radar.scenario import (
    MODES,
    PRESETS,
    STRATEGIES,
    ScenarioConfig,
    line_of_key,
    load_scenario,
    non_default_settings,
)

# Rules whose findings point at the ``targets`` block of a scenario file
TARGET_RULES = ("target_count", "initial_state", "target_amplitude", "fov_containment",
                "distinct_initial_bins", "bin_overlap_horizon")
RULE_KEYS = {"bin_count": "n_bins", "beam_count": "n_tx"}


@dataclass
class RunRequest:
    scenario_path: Optional[str]
    preset: Optional[str]
    strategies: List[str]
    n_runs: Optional[int]
    out_dir: str
    seed: Optional[int]
    mode: Optional[str]
    workers: int = 1
    fmt: str = "md"
    no_report: bool = False
    strict: bool = False
    console: bool = False
    verbose: bool = False
    progress: bool = False

    def __post_init__(self):
        if not self.strategies:
            raise ScenarioError("strategy set must not be empty")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown:
            raise ScenarioError(f"unknown strategies: {', '.join(unknown)} "
                                f"(expected {', '.join(STRATEGIES)})")
        if (self.scenario_path is None) == (self.preset is None):
            raise ScenarioError("give exactly one of a scenario path or a preset")


def parse_strategies(text: str) -> List[str]:
    out: List[str] = []
    for s in text.split(","):
        s = s.strip().lower()
        if s and s not in out:
            out.append(s)
    return out

# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _rule_line(text: Optional[str], rule: str, msg: str) -> int:
    if rule in TARGET_RULES:
        key = "targets"
    elif rule == "positive_counts":
        key = msg.split()[0]
    else:
        key = RULE_KEYS.get(rule, rule)
    return line_of_key(text, key) or 0


def validate(path: str) -> CheckResult:
    """Schema and semantic checks of one scenario file.

    A missing file raises ``ScenarioError``; every other problem is reported
    as a finding with the line it refers to.
    """
    if not os.path.isfile(path):
        raise ScenarioError("scenario file not found", path)
    start = time.monotonic()
    try:
        config = load_scenario(path, check=False)
    except ScenarioError as exc:
        return CheckResult("scenario", "FAIL",
                           [Finding(path, exc.message, "error", "scenario", line=exc.line or 0)],
                           summary="1 error(s), 0 warning(s)",
                           elapsed=time.monotonic() - start)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    result = scenario_check(config.problems(), path,
                            lambda rule, msg: _rule_line(text, rule, msg))
    result.elapsed = time.monotonic() - start
    return result


def validate_preset(name: str) -> CheckResult:
    config = PRESETS[name]()
    return scenario_check(config.problems(), f"<preset:{name}>")

# ---------------------------------------------------------------------------
# Run
# ---------------------------------------------------------------------------

def load_config(request: RunRequest) -> ScenarioConfig:
    if request.preset is not None:
        config = PRESETS[request.preset]()
    else:
        config = load_scenario(request.scenario_path, check=False)
    overrides = {}
    if request.seed is not None:
        overrides["seed"] = request.seed
    if request.mode is not None:
        overrides["mode"] = request.mode
    if request.n_runs is not None:
        overrides["n_runs"] = request.n_runs
    config = config.replace(**overrides)
    for rule, severity, msg in config.problems():
        if severity == "error":
            raise ScenarioError(f"[{rule}] {msg}", request.scenario_path)
    return config


def _ensure_writable(out_dir: str) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ScenarioError(f"cannot create output directory: {exc.strerror}", out_dir) from None
    if not os.access(out_dir, os.W_OK):
        raise ScenarioError("output directory is not writable", out_dir)


def run(request: RunRequest) -> int:
    """Run every requested strategy and write all outputs. Returns the exit status."""
    config = load_config(request)
    _ensure_writable(request.out_dir)
    status = RunProgress(request.progress, force=request.progress)
    if request.verbose:
        print(f"Scenario: {config.name} ({config.n_targets} targets)", file=sys.stderr)
        for key, value in non_default_settings(config).items():
            print(f"  {key} = {value}", file=sys.stderr)

    results: Dict[str, MonteCarloResult] = {}
    summaries: Dict[str, str] = {}
    for strategy in request.strategies:
        start = time.monotonic()
        status.update(f"[{strategy}] {config.n_runs} run(s)")
        res = run_monte_carlo(config, config.n_runs, strategy, request.workers,
                              on_progress=status.run_callback(strategy))
        steps_path, summary_path = res.write(os.path.join(request.out_dir, strategy))
        results[strategy] = res
        summaries[strategy] = summary_path
        if request.verbose:
            print(f"[{strategy}] {time.monotonic() - start:.1f}s, wrote {steps_path}",
                  file=sys.stderr)
        for rec in res.records:
            if rec.diagnostic:
                print(f"Warning: [{strategy}] run {rec.run_id} {rec.status}: {rec.diagnostic}",
                      file=sys.stderr)

    plot_path = write_plot_script(request.out_dir, summaries, config.n_targets)
    checks = trend_checks(results, config.t_max)

    print(format_summary_table(results, config.t_max))
    print(f"Plot script written to: {plot_path}")
    if request.console:
        ConsoleSummary(checks, sys.stdout.isatty(), results=results, t_max=config.t_max,
                       title="Strategy trend checks").print_results()
    if not request.no_report:
        metadata = ReportMetadata(
            scenario_name=config.name,
            date=datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
            tool_version=TOOL_VERSION, seed=config.seed, mode=config.mode,
            n_runs=config.n_runs, strategies=tuple(request.strategies))
        report_path = os.path.join(request.out_dir, f"report.{request.fmt}")
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(ReportGenerator(metadata, results, checks, config.t_max,
                                     request.fmt).generate())
        print(f"Report written to: {report_path}")

    if request.strict and any(c.status == "FAIL" for c in checks):
        return 1
    return 0

# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="cognitive-radar",
        description="Closed-loop cognitive MIMO radar simulator with per-target POMCP planning.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=textwrap.dedent("""\
            examples:
              cognitive-radar --preset desk
              cognitive-radar --scenario scenarios/paper.json --strategies uniform,power-aware --runs 20 --seed 7
              cognitive-radar --scenario scenarios/paper.json --validate
              cognitive-radar --preset desk --workers 4 --format html --console
              cognitive-radar --preset desk --mode signal --out results/signal --strict

            strategies:
              orthogonal, uniform, power-aware

            exit codes:
              0  Success
              1  Runtime failure (or a failed trend check with --strict)
              2  Usage or scenario error
        """))
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", default=None, metavar="PATH",
                        help="Scenario file (JSON, or YAML with the yaml extra)")
    source.add_argument("--preset", choices=sorted(PRESETS), default=None,
                        help="Built-in scenario")
    parser.add_argument("--strategies", default=",".join(STRATEGIES),
                        help="Comma-separated strategies (default: all)")
    parser.add_argument("--runs", type=int, default=None,
                        help="Monte Carlo runs per strategy (default: from scenario)")
    parser.add_argument("--seed", type=int, default=None,
                        help="Master seed (default: from scenario)")
    parser.add_argument("--out", default="results",
                        help="Output directory (default: results)")
    parser.add_argument("--mode", choices=MODES, default=None,
                        help="Environment fidelity (default: from scenario)")
    parser.add_argument("--validate", action="store_true",
                        help="Only validate the scenario and exit")
    parser.add_argument("-f", "--format", choices=["md", "html", "json"], default="md",
                        help="Report format (default: md)")
    parser.add_argument("--workers", type=int, default=1,
                        help="Parallel run processes (default: 1)")
    parser.add_argument("--no-report", action="store_true",
                        help="Skip writing the report file")
    parser.add_argument("--strict", action="store_true",
                        help="Exit 1 when a trend check fails")
    parser.add_argument("--verbose", action="store_true",
                        help="Verbose output on stderr")
    parser.add_argument("--progress", action="store_true", default=None,
                        help="Show per-run progress (auto-enabled on TTY)")
    parser.add_argument("--no-progress", action="store_true",
                        help="Disable progress even on TTY")
    parser.add_argument("--console", action="store_true",
                        help="Print colored check results to the terminal")
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    args = parser.parse_args(argv)
    if args.runs is not None and args.runs < 1:
        parser.error("--runs must be >= 1")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be >= 0")
    return args


def main(argv: Optional[Sequence[str]] = None) -> None:
    args = parse_args(argv)

    if args.validate:
        try:
            result = (validate_preset(args.preset) if args.preset
                      else validate(args.scenario))
        except ScenarioError as exc:
            print(f"Error: {exc}", file=sys.stderr)
            sys.exit(2)
        if args.console:
            ConsoleSummary([result], sys.stdout.isatty(), title="Scenario validation").print_results()
        for f in result.findings:
            print(f"{f.where}: {f.severity}: {f.description}")
        print(f"{result.status}: {result.summary}")
        sys.exit(2 if result.status == "FAIL" else 0)

    show_progress = not args.no_progress and (args.progress or sys.stderr.isatty())
    try:
        request = RunRequest(
            scenario_path=args.scenario, preset=args.preset,
            strategies=parse_strategies(args.strategies), n_runs=args.runs,
            out_dir=args.out, seed=args.seed, mode=args.mode, workers=args.workers,
            fmt=args.format, no_report=args.no_report, strict=args.strict,
            console=args.console, verbose=args.verbose, progress=bool(show_progress))
        code = run(request)
    except ScenarioError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(2)
    except (CognitiveRadarError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(1)
    sys.exit(code)


if __name__ == "__main__":
    main()
