"""Closed-loop simulation: acquisition scan, per-step planning, waveform
synthesis, measurement and belief updates, plus the Monte Carlo harness.
"""

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from cognitive_radar.array import AngleGrid, virtual_vector
from cognitive_radar.detection import (
    DetectionOutcome,
    DisturbanceModel,
    detect,
    sigma_hat,
    threshold_for,
)
from cognitive_radar.errors import (
    AcquisitionError,
    BinCollisionError,
    FieldOfViewError,
    SimulationError,
)
from cognitive_radar.planner import (
    BeliefSet,
    GeneratorState,
    PlannerSettings,
    TargetPlanner,
)
from cognitive_radar.scenario import (
    MotionModel,
    RadarEquationMap,
    ScenarioConfig,
    TargetState,
    amplitude_of,
    per_channel_snr_db,
)
from cognitive_radar.waveform import WaveformSpec, orthogonal_waveform, predict_delta, synthesize

STATUS_OK = "ok"
STATUS_TRUNCATED = "truncated"
STATUS_FAILED = "failed-to-acquire"

STEP_COLUMNS = (
    "run_id", "t", "target_id",
    "true_x", "true_y", "true_vx", "true_vy",
    "est_x", "est_y", "est_vx", "est_vy",
    "true_bin", "chosen_bin", "detected", "lambda_stat", "allocated_power", "snr_db",
)
SUMMARY_COLUMNS = ("t", "target_id", "pd_mean", "pos_rmse", "vel_rmse")

ProgressCallback = Callable[[int, int, "MetricsRecord"], None]

# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------

@dataclass
class EnvironmentState:
    """True target states plus the disturbance and measurement fidelity."""

    states: List[TargetState]
    grid: AngleGrid
    motion: MotionModel
    radar_maps: List[RadarEquationMap]
    disturbance: DisturbanceModel
    n_rx: int
    p_fa: float = 1e-4
    mode: str = "analytic"
    t: int = 0

    @property
    def threshold(self) -> float:
        return threshold_for(self.p_fa)

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "EnvironmentState":
        env = cls(config.initial_states(), config.grid, config.motion, config.radar_maps(),
                  DisturbanceModel(config.sigma_c, config.ar_rho), config.n_rx, config.p_fa,
                  config.mode)
        env.check_bins()
        return env

    def true_bins(self) -> List[int]:
        return [self.grid.bin_of(s) for s in self.states]

    def check_bins(self) -> List[int]:
        bins = self.true_bins()
        owner: Dict[int, int] = {}
        for m, b in enumerate(bins):
            if b in owner:
                raise BinCollisionError(b, (owner[b], m))
            owner[b] = m
        return bins

    def advance(self, rng: np.random.Generator) -> None:
        """Move every target one step; raises on FOV exit or bin collision."""
        nxt = [self.motion.step(s, rng) for s in self.states]
        for s in nxt:
            if self.grid.try_bin_xy(s.x, s.y) is None:
                raise FieldOfViewError(s.angle_deg)
        self.states = nxt
        self.t += 1
        self.check_bins()


def _estimate(env: EnvironmentState, m: int, W: np.ndarray, bin_index: int,
              rng: np.random.Generator) -> DetectionOutcome:
    theta = env.grid.center(bin_index)
    v = virtual_vector(W, theta, env.n_rx)
    if float(np.vdot(v, v).real) == 0.0:
        return DetectionOutcome(0.0, 0j, math.inf, False, bin_index)
    sigma = sigma_hat(v, env.disturbance)
    state = env.states[m]
    if env.grid.bin_of(state) == bin_index:
        alpha = amplitude_of(state, env.radar_maps[m], rng)
    else:
        alpha = 0j
    if env.mode == "signal":
        y = alpha * v + env.disturbance.sample(v.size, rng)
        alpha_hat = complex(np.vdot(v, y) / np.vdot(v, v).real)
    else:
        noise = complex(rng.standard_normal(), rng.standard_normal()) * (sigma / math.sqrt(2.0))
        alpha_hat = alpha + noise
    return detect(alpha_hat, sigma, env.threshold, bin_index)


def measure(env: EnvironmentState, W: WaveformSpec, chosen_bins: Sequence[int],
            rng: np.random.Generator) -> List[DetectionOutcome]:
    """One receive dwell: per target, test the chosen bin under waveform *W*."""
    return [_estimate(env, m, W.W, b, rng) for m, b in enumerate(chosen_bins)]

# ---------------------------------------------------------------------------
# Acquisition
# ---------------------------------------------------------------------------

def initial_belief(outcome: DetectionOutcome, radar_map: RadarEquationMap,
                   grid: AngleGrid, n_particles: int, v_max: float, max_range: float, rng: np.random.Generator,
                   target_id: int = 0) -> BeliefSet:
    """Particles spread over the detected sector and the 3-sigma range interval."""
    mag = abs(outcome.alpha_hat)
    r_lo = min(radar_map.range_of(mag + 3.0 * outcome.sigma_hat), max_range)
    r_hi = min(radar_map.range_of(mag - 3.0 * outcome.sigma_hat), max_range)
    lo, hi = grid.sector(outcome.bin)
    r = rng.uniform(r_lo, r_hi, n_particles) if r_hi > r_lo else np.full(n_particles, r_lo)
    theta = np.radians(rng.uniform(lo, hi, n_particles))
    particles = np.empty((n_particles, 4))
    particles[:, 0] = r * np.cos(theta)
    particles[:, 2] = r * np.sin(theta)
    particles[:, 1] = rng.uniform(-v_max, v_max, n_particles) if v_max > 0 else 0.0
    particles[:, 3] = rng.uniform(-v_max, v_max, n_particles) if v_max > 0 else 0.0
    return BeliefSet(particles, target_id)


@dataclass
class ScanResult:
    beliefs: List[BeliefSet]
    generators: List[GeneratorState]
    dwells: int
    false_alarms: int = 0


def initial_scan(env: EnvironmentState, config: ScenarioConfig,
                 rng: np.random.Generator) -> ScanResult:
    """Orthogonal full-FOV dwells until every target has been detected once.

    Association is by true bin. Beliefs of already acquired targets are
    propagated through the motion model while the scan continues.
    """
    W = orthogonal_waveform(config.n_tx, config.p_total)
    M = len(env.states)
    beliefs: List[Optional[BeliefSet]] = [None] * M
    generators: List[Optional[GeneratorState]] = [None] * M
    false_alarms = 0
    for dwell in range(1, config.max_scan_dwells + 1):
        bins = env.check_bins()
        outcomes = measure(env, W, bins, rng)
        false_alarms += int(rng.binomial(config.n_bins - M, config.p_fa))
        for m, outcome in enumerate(outcomes):
            if beliefs[m] is not None or not outcome.detected:
                continue
            beliefs[m] = initial_belief(outcome, env.radar_maps[m], env.grid,
                                        config.n_particles, config.v_max, config.max_range,
                                        rng, target_id=m)
            generators[m] = GeneratorState(outcome.sigma_hat, env.motion, env.radar_maps[m],
                                           env.threshold, env.grid)
        if all(b is not None for b in beliefs):
            return ScanResult(beliefs, generators, dwell, false_alarms)
        env.advance(rng)
        for m, b in enumerate(beliefs):
            if b is not None:
                beliefs[m] = BeliefSet(env.motion.step_many(b.particles, rng), m)
    missing = [m for m, b in enumerate(beliefs) if b is None]
    raise AcquisitionError(config.max_scan_dwells, missing)

# ---------------------------------------------------------------------------
# Episode
# ---------------------------------------------------------------------------

@dataclass
class StepRow:
    run_id: int
    t: int
    target_id: int
    true_state: TargetState
    est_state: TargetState
    true_bin: int
    chosen_bin: int
    detected: bool
    lambda_stat: float
    allocated_power: float
    snr_db: float

    def as_row(self) -> List[str]:
        s, e = self.true_state, self.est_state
        floats = (s.x, s.y, s.vx, s.vy, e.x, e.y, e.vx, e.vy)
        return ([str(self.run_id), str(self.t), str(self.target_id)]
                + [_fmt(v) for v in floats]
                + [str(self.true_bin), str(self.chosen_bin), str(int(self.detected)),
                   _fmt(self.lambda_stat), _fmt(self.allocated_power), _fmt(self.snr_db)])


@dataclass
class MetricsRecord:
    """Per-step, per-target rows of one episode plus its outcome."""

    run_id: int
    strategy: str
    rows: List[StepRow] = field(default_factory=list)
    status: str = STATUS_OK
    diagnostic: str = ""
    scan_dwells: int = 0
    false_alarms: int = 0

    def rows_for(self, target_id: int) -> List[StepRow]:
        return [r for r in self.rows if r.target_id == target_id]

    def detection_rate(self, target_id: int) -> float:
        rows = self.rows_for(target_id)
        return sum(r.detected for r in rows) / len(rows) if rows else 0.0


def arbitrate_bins(choices: Sequence[int], rankings: Sequence[Sequence[int]]) -> List[int]:
    """Give every target a distinct bin; later targets fall back to their next best."""
    taken = set()
    out = []
    for m, choice in enumerate(choices):
        if choice in taken:
            choice = next(a for a in rankings[m] if a not in taken)
        taken.add(choice)
        out.append(choice)
    return out


def _run_streams(seed: int, run_id: int, n_targets: int) -> Tuple[np.random.Generator, ...]:
    """Motion, measurement, scan and per-target planner streams of one run.

    Depends only on the master seed and run index. Motion has a stream of its
    own so every strategy sees the same target trajectories.
    """
    children = np.random.SeedSequence([seed, run_id]).spawn(3 + n_targets)
    return tuple(np.random.default_rng(c) for c in children)


def planner_settings(config: ScenarioConfig) -> PlannerSettings:
    return PlannerSettings(
        n_sim=config.n_sim, c_ucb=config.c_ucb, discount=config.discount,
        horizon=config.rollout_depth, reuse_tree=config.reuse_tree,
        n_particles=config.n_particles, max_attempts_factor=config.max_attempts_factor,
    )


def _plan_all(planners: List[TargetPlanner], pool: Optional[ThreadPoolExecutor]) -> List[int]:
    if pool is None:
        return [p.plan() for p in planners]
    return list(pool.map(lambda p: p.plan(), planners))


def run_episode(config: ScenarioConfig, run_id: int = 0,
                strategy: Optional[str] = None) -> MetricsRecord:
    """Acquire, then track for ``t_max`` steps. Deterministic in ``(seed, run_id)``."""
    strategy = strategy or config.strategy
    record = MetricsRecord(run_id, strategy)
    streams = _run_streams(config.seed, run_id, config.n_targets)
    motion_rng, measure_rng, scan_rng, *planner_rngs = streams
    try:
        env = EnvironmentState.from_config(config)
        scan = initial_scan(env, config, scan_rng)
    except AcquisitionError as exc:
        record.status, record.diagnostic = STATUS_FAILED, str(exc)
        return record
    except SimulationError as exc:
        record.status, record.diagnostic = STATUS_TRUNCATED, f"during scan: {exc}"
        return record
    record.scan_dwells = scan.dwells
    record.false_alarms = scan.false_alarms

    settings = planner_settings(config)
    planners = [TargetPlanner(m, scan.beliefs[m], scan.generators[m], settings, planner_rngs[m])
                for m in range(config.n_targets)]
    pool = ThreadPoolExecutor(max_workers=len(planners)) if config.parallel_planners else None
    try:
        for t in range(config.t_max):
            chosen = arbitrate_bins(_plan_all(planners, pool),
                                    [p.ranked_actions() for p in planners])
            deltas = [predict_delta(p.predicted_state()) for p in planners]
            W = synthesize(strategy, chosen, env.grid, config.n_tx, config.p_total, deltas)
            env.advance(motion_rng)
            outcomes = measure(env, W, chosen, measure_rng)
            true_bins = env.true_bins()
            for m, (planner, outcome) in enumerate(zip(planners, outcomes)):
                planner.observe(chosen[m], outcome.observation)
                state = env.states[m]
                power = W.powers[m] if W.powers.size else config.p_total / config.n_tx
                record.rows.append(StepRow(
                    run_id, t, m, state, planner.belief.mean_state(), true_bins[m], chosen[m],
                    outcome.detected, outcome.lambda_stat, float(power),
                    per_channel_snr_db(env.radar_maps[m].magnitude(state.range_km),
                                       config.sigma_c),
                ))
    except SimulationError as exc:
        record.status = STATUS_TRUNCATED
        record.diagnostic = f"step {env.t}: {exc}"
    finally:
        if pool is not None:
            pool.shutdown()
    return record


def _episode_job(args: Tuple[ScenarioConfig, int, str]) -> MetricsRecord:
    config, run_id, strategy = args
    return run_episode(config, run_id, strategy)

# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------

@dataclass
class SummaryRow:
    t: int
    target_id: int
    pd_mean: float
    pos_rmse: float
    vel_rmse: float

    def as_row(self) -> List[str]:
        return [str(self.t), str(self.target_id), _fmt(self.pd_mean),
                _fmt(self.pos_rmse), _fmt(self.vel_rmse)]


@dataclass
class MonteCarloResult:
    strategy: str
    records: List[MetricsRecord]
    summary: List[SummaryRow]

    def count(self, status: str) -> int:
        return sum(1 for r in self.records if r.status == status)

    def series(self, target_id: int, metric: str) -> np.ndarray:
        """Per-step values of *metric* for one target, ordered by ``t``."""
        rows = sorted((r for r in self.summary if r.target_id == target_id), key=lambda r: r.t)
        return np.array([getattr(r, metric) for r in rows])

    def write(self, out_dir: str) -> Tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        steps = os.path.join(out_dir, "steps.csv")
        summary = os.path.join(out_dir, "summary.csv")
        write_steps_csv(self.records, steps)
        write_summary_csv(self.summary, summary)
        return steps, summary


def summarize(records: Sequence[MetricsRecord]) -> List[SummaryRow]:
    """Per-step detection rate and position/velocity RMSE across runs.

    Failed acquisitions contribute nothing; truncated runs contribute the
    steps they completed.
    """
    cells: Dict[Tuple[int, int], List[StepRow]] = {}
    for record in records:
        if record.status == STATUS_FAILED:
            continue
        for row in record.rows:
            cells.setdefault((row.t, row.target_id), []).append(row)
    out = []
    for (t, m), rows in sorted(cells.items()):
        det = np.array([r.detected for r in rows], dtype=float)
        pos = np.array([(r.est_state.x - r.true_state.x) ** 2 + (r.est_state.y - r.true_state.y) ** 2
                        for r in rows])
        vel = np.array([(r.est_state.vx - r.true_state.vx) ** 2
                        + (r.est_state.vy - r.true_state.vy) ** 2 for r in rows])
        out.append(SummaryRow(t, m, float(det.mean()), float(np.sqrt(pos.mean())),
                              float(np.sqrt(vel.mean()))))
    return out


def run_monte_carlo(config: ScenarioConfig, n_runs: Optional[int] = None,
                    strategy: Optional[str] = None, workers: int = 1,
                    on_progress: Optional[ProgressCallback] = None) -> MonteCarloResult:
    """Run ``n_runs`` independent episodes and aggregate them.

    With ``workers > 1`` episodes are dispatched to a process pool; results
    are ordered by run index so the output does not depend on completion order.
    """
    n_runs = config.n_runs if n_runs is None else n_runs
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    strategy = strategy or config.strategy
    jobs = [(config, run_id, strategy) for run_id in range(n_runs)]
    records: List[MetricsRecord] = []
    if workers <= 1:
        for job in jobs:
            records.append(_episode_job(job))
            if on_progress:
                on_progress(len(records), n_runs, records[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_episode_job, job) for job in jobs]
            for fut in as_completed(futures):
                records.append(fut.result())
                if on_progress:
                    on_progress(len(records), n_runs, records[-1])
    records.sort(key=lambda r: r.run_id)
    return MonteCarloResult(strategy, records, summarize(records))

# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.9g}"


def write_steps_csv(records: Sequence[MetricsRecord], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STEP_COLUMNS)
        for record in sorted(records, key=lambda r: r.run_id):
            for row in record.rows:
                writer.writerow(row.as_row())


def write_summary_csv(summary: Sequence[SummaryRow], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary:
            writer.writerow(row.as_row())


def read_summary_csv(path: str) -> List[SummaryRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [SummaryRow(int(r["t"]), int(r["target_id"]), float(r["pd_mean"]),
                           float(r["pos_rmse"]), float(r["vel_rmse"]))
                for r in csv.DictReader(fh)]
