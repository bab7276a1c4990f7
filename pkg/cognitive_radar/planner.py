"""Per-target POMCP planning.

Each target owns a search tree over its own angle-bin actions, a black-box
generator parameterised by the target's latest sigma_hat, and an unweighted
particle belief. Trees are keyed by ``(action, observation key)`` where the
key is ``None`` for an empty observation and the magnitude bin otherwise.

Target motion does not depend on the tested bin, so one search call samples
every simulation's trajectory, angle bins and would-be magnitude bins up
front with ``numpy``; the tree walk itself only compares plain integers.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from cognitive_radar.array import AngleGrid
from cognitive_radar.detection import EMPTY, SQRT3, Observation
from cognitive_radar.scenario import MotionModel, RadarEquationMap, TargetState

ObservationKey = Optional[int]
Action = int
History = List[Tuple[Action, ObservationKey]]

TWO_PI = 2.0 * math.pi
INV_SQRT2 = 1.0 / math.sqrt(2.0)

# Velocity kick of a reinvigorated particle, in per-step process-noise deviations
KICK_VELOCITY_STEPS = 3.0

# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorState:
    """Parameters of one target's black-box generator."""

    sigma_hat: float
    motion: MotionModel
    radar_map: RadarEquationMap
    threshold: float
    grid: AngleGrid

    def __post_init__(self):
        if not self.sigma_hat > 0:
            raise ValueError(f"sigma_hat must be positive, got {self.sigma_hat}")

    @property
    def beta(self) -> float:
        return SQRT3 * self.sigma_hat


def refresh_sigma(g: GeneratorState, sigma_observed: float) -> GeneratorState:
    """Replace the generator's sigma_hat (and hence beta) after a detection."""
    if not sigma_observed > 0:
        raise ValueError(f"observed sigma must be positive, got {sigma_observed}")
    if sigma_observed == g.sigma_hat:
        return g
    return dataclasses.replace(g, sigma_hat=float(sigma_observed))


def generate(state: TargetState, action: int, g: GeneratorState,
             rng: np.random.Generator) -> Tuple[TargetState, Observation, float]:
    """Sample ``(s', o, r)``: motion step, Wald test on the chosen bin, hit reward."""
    nxt = g.motion.step(state, rng)
    if g.grid.try_bin_xy(nxt.x, nxt.y) != action:
        return nxt, EMPTY, 0.0
    magnitude = g.radar_map.kappa / (nxt.x * nxt.x + nxt.y * nxt.y)
    phase = TWO_PI * rng.random()
    re, im = rng.standard_normal(2) * (g.sigma_hat * INV_SQRT2)
    raw = math.hypot(magnitude * math.cos(phase) + re, magnitude * math.sin(phase) + im)
    if 2.0 * raw * raw / g.sigma_hat ** 2 >= g.threshold:
        return nxt, Observation.detection(raw, g.sigma_hat), 1.0
    return nxt, EMPTY, 1.0


def _observe_batch(g: GeneratorState, x: np.ndarray, y: np.ndarray,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Angle bins of the points ``(x, y)`` and the magnitude bin each would
    report if its own bin were tested (``-1`` for a missed detection).
    """
    bins = g.grid.bins_of_xy(x, y)
    r2 = np.maximum(x * x + y * y, np.finfo(float).tiny)
    phase = rng.uniform(0.0, TWO_PI, x.shape)
    noise = (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) * (g.sigma_hat * INV_SQRT2)
    raw = np.abs((g.radar_map.kappa / r2) * np.exp(1j * phase) + noise)
    above = 2.0 * raw ** 2 / g.sigma_hat ** 2 >= g.threshold
    keys = np.where(above, np.floor(raw / g.beta), -1).astype(np.int64)
    return bins, keys


def _step_batch(g: GeneratorState, particles: np.ndarray, action: int,
                rng: np.random.Generator):
    """Vectorised generator over an ``(n, 4)`` array.

    Returns next states, detection mask, magnitude bins (-1 when empty) and
    the angle bins (-1 outside the field of view).
    """
    nxt = g.motion.step_many(particles, rng)
    bins, keys = _observe_batch(g, nxt[:, 0], nxt[:, 2], rng)
    detected = (bins == action) & (keys >= 0)
    return nxt, detected, np.where(detected, keys, -1), bins

# ---------------------------------------------------------------------------
# Belief
# ---------------------------------------------------------------------------

@dataclass
class BeliefSet:
    """Unweighted particle approximation of one target's state posterior."""

    particles: np.ndarray
    target_id: int = 0

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float).reshape(-1, 4)
        if self.particles.shape[0] == 0:
            raise ValueError("belief must hold at least one particle")

    @classmethod
    def from_states(cls, states: Sequence[TargetState], target_id: int = 0) -> "BeliefSet":
        return cls(np.array([s.as_array() for s in states]), target_id)

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    def mean(self) -> np.ndarray:
        return self.particles.mean(axis=0)

    def mean_state(self) -> TargetState:
        return TargetState.from_array(self.mean())

    def covariance_trace(self) -> float:
        if self.size < 2:
            return 0.0
        return float(np.trace(np.cov(self.particles, rowvar=False)))

    def mean_bin(self, grid: AngleGrid) -> Optional[int]:
        m = self.mean()
        return grid.try_bin_xy(m[0], m[2])


def _in_support(bins: np.ndarray, action: int, observation: Observation) -> np.ndarray:
    """Particles whose angle bin alone is compatible with *observation*."""
    if observation.detected:
        return bins == action
    return (bins >= 0) & (bins != action)


def _jitter(survivors: np.ndarray, count: int, g: GeneratorState, action: int,
            observation: Observation, rng: np.random.Generator) -> np.ndarray:
    picks = survivors[rng.integers(survivors.shape[0], size=count)]
    if g.motion.sigma_s == 0:
        return picks
    moved = picks + rng.normal(0.0, g.motion.sigma_s, size=(count, 2)) @ g.motion.noise_gain.T
    stray = ~_in_support(g.grid.bins_of_xy(moved[:, 0], moved[:, 2]), action, observation)
    moved[stray] = picks[stray]
    return moved


def _rotate(particles: np.ndarray, offsets_deg: np.ndarray) -> np.ndarray:
    """Rotate positions about the radar by *offsets_deg*, keeping range and velocity."""
    out = particles.copy()
    r = np.hypot(particles[:, 0], particles[:, 2])
    theta = np.arctan2(particles[:, 2], particles[:, 0]) + np.radians(offsets_deg)
    out[:, 0] = r * np.cos(theta)
    out[:, 2] = r * np.sin(theta)
    return out


def reinvigorate(particles: np.ndarray, fraction: float, g: GeneratorState, action: int,
                 observation: Observation, rng: np.random.Generator) -> np.ndarray:
    """Move a random *fraction* of the particles by up to one bin width in angle
    and a few process-noise steps in velocity.

    A moved particle replaces its source only when its new bin still agrees
    with *observation*, so a detection keeps the cloud inside the tested bin
    while an empty dwell lets it leak into the neighbouring bins.
    """
    n = particles.shape[0]
    count = int(round(fraction * n))
    if count == 0:
        return particles
    idx = rng.choice(n, size=count, replace=False)
    moved = _rotate(particles[idx], rng.uniform(-g.grid.width, g.grid.width, count))
    kick = KICK_VELOCITY_STEPS * g.motion.sigma_s * g.motion.dt
    if kick > 0:
        moved[:, [1, 3]] += rng.normal(0.0, kick, size=(count, 2))
    ok = _in_support(g.grid.bins_of_xy(moved[:, 0], moved[:, 2]), action, observation)
    out = particles.copy()
    out[idx[ok]] = moved[ok]
    return out


def reseed_belief(belief: BeliefSet, anchor_bin: int, grid: AngleGrid, fraction: float,
                  rng: np.random.Generator, exclude_bin: Optional[int] = None) -> BeliefSet:
    """Scatter a *fraction* of the particles over *anchor_bin* and its two neighbours.

    Ranges and velocities are borrowed from random particles of the current
    belief. Scattered particles landing in *exclude_bin* (the bin just seen
    empty) are dropped.
    """
    n = belief.size
    count = int(round(fraction * n))
    if count == 0:
        return belief
    lo = grid.sector(max(anchor_bin - 1, 0))[0]
    hi = grid.sector(min(anchor_bin + 1, grid.n_bins - 1))[1]
    donors = belief.particles[rng.integers(n, size=count)]
    angles = np.degrees(np.arctan2(donors[:, 2], donors[:, 0]))
    moved = _rotate(donors, rng.uniform(lo, hi, count) - angles)
    bins = grid.bins_of_xy(moved[:, 0], moved[:, 2])
    ok = bins >= 0
    if exclude_bin is not None:
        ok &= bins != exclude_bin
    out = belief.particles.copy()
    out[rng.choice(n, size=count, replace=False)[ok]] = moved[ok]
    return BeliefSet(out, belief.target_id)


def update_belief(belief: BeliefSet, action: int, observation: Observation,
                  g: GeneratorState, rng: np.random.Generator,
                  n_particles: Optional[int] = None,
                  max_attempts_factor: int = 10,
                  seeds: Optional[Sequence[Sequence[float]]] = None,
                  reinvigoration: float = 0.0) -> BeliefSet:
    """Rejection-sample the posterior after executing *action* and seeing *observation*.

    Particles are propagated through the generator and kept when their
    simulated observation matches. A short count is topped up from *seeds*
    (states the search tree already reached under the same action and
    observation), then by jittered duplication of survivors. With no
    matching particle at all, propagated particles whose bin agrees with the
    observation are used, and failing that the belief is pure motion
    propagation.
    """
    target = n_particles or belief.size
    budget = max_attempts_factor * target
    kept: List[np.ndarray] = []
    fallback: Optional[np.ndarray] = None
    n_kept = 0
    attempts = 0
    while n_kept < target and attempts < budget:
        batch = min(target, budget - attempts)
        idx = rng.integers(belief.size, size=batch)
        nxt, detected, disc, bins = _step_batch(g, belief.particles[idx], action, rng)
        if observation.detected:
            match = detected & (disc == observation.disc_bin)
        else:
            match = ~detected & (bins >= 0)
        if fallback is None:
            fallback = nxt[_in_support(bins, action, observation)]
        kept.append(nxt[match])
        n_kept += int(match.sum())
        attempts += batch
    survivors = np.concatenate(kept)[:target] if kept else np.empty((0, 4))

    if seeds is not None and len(seeds) and survivors.shape[0] < target:
        pool = np.asarray(seeds, dtype=float).reshape(-1, 4)
        pool = pool[_in_support(g.grid.bins_of_xy(pool[:, 0], pool[:, 2]), action, observation)]
        survivors = np.vstack([survivors, pool[:target - survivors.shape[0]]])

    if survivors.shape[0] == 0:
        if fallback is not None and fallback.shape[0] > 0:
            survivors = fallback[:target]
        else:
            survivors = g.motion.step_many(
                belief.particles[rng.integers(belief.size, size=target)], rng)
    if survivors.shape[0] < target:
        extra = _jitter(survivors, target - survivors.shape[0], g, action, observation, rng)
        survivors = np.vstack([survivors, extra])
    if reinvigoration > 0:
        survivors = reinvigorate(survivors, reinvigoration, g, action, observation, rng)
    return BeliefSet(survivors, belief.target_id)


def predict_mean(belief: BeliefSet, motion: MotionModel) -> TargetState:
    """Predicted next state: average of ``A s`` over the particles."""
    return TargetState.from_array(motion.predict(belief.particles).mean(axis=0))

# ---------------------------------------------------------------------------
# Search tree
# ---------------------------------------------------------------------------

class SearchNode:
    """History node holding per-action statistics and observation children.

    ``particles`` collects up to ``max_node_particles`` states that reached
    the node during search; they seed the belief when the node becomes the
    root.
    """

    __slots__ = ("visits", "action_visits", "action_values", "children",
                 "particles", "_untried")

    def __init__(self, n_actions: int):
        self.visits = 0
        self.action_visits: List[int] = [0] * n_actions
        self.action_values: List[float] = [0.0] * n_actions
        self.children: Dict[Tuple[Action, ObservationKey], "SearchNode"] = {}
        self.particles: List[List[float]] = []
        self._untried = 0

    @property
    def n_actions(self) -> int:
        return len(self.action_visits)

    def select_action(self, c_ucb: float) -> int:
        """UCB1; an untried action always wins, lowest index first."""
        counts = self.action_visits
        n = len(counts)
        while self._untried < n and counts[self._untried] > 0:
            self._untried += 1
        if self._untried < n:
            return self._untried
        k = c_ucb * math.sqrt(math.log(self.visits))
        sqrt = math.sqrt
        scores = [q + k / sqrt(c) for q, c in zip(self.action_values, counts)]
        return scores.index(max(scores))

    def update(self, action: int, value: float) -> None:
        self.visits += 1
        n = self.action_visits[action] + 1
        self.action_visits[action] = n
        q = self.action_values[action]
        self.action_values[action] = q + (value - q) / n

    def best_action(self) -> int:
        """``argmax_a Q(h, a)`` over tried actions; ties go to the lowest bin."""
        best, best_q = 0, -math.inf
        for a, (q, c) in enumerate(zip(self.action_values, self.action_visits)):
            if c > 0 and q > best_q:
                best, best_q = a, q
        return best

    def ranked_actions(self) -> List[int]:
        """All actions by decreasing value, tried before untried, index breaking ties."""
        counts, values = self.action_visits, self.action_values
        return sorted(range(self.n_actions), key=lambda a: (counts[a] == 0, -values[a], a))

    def count_nodes(self) -> int:
        count = 0
        stack = [self]
        while stack:
            node = stack.pop()
            count += 1
            stack.extend(node.children.values())
        return count


@dataclass(frozen=True)
class PlannerSettings:
    n_sim: int = 12000
    c_ucb: float = math.sqrt(2.0)
    discount: float = 0.95
    horizon: int = 5
    reuse_tree: bool = True
    n_particles: Optional[int] = None
    max_attempts_factor: int = 10
    max_node_particles: int = 256
    reinvigoration: float = 0.1
    reseed_after: int = 3
    reseed_fraction: float = 0.2


@dataclass
class SampledPaths:
    """Pre-drawn futures of ``n`` simulations, each as plain lists.

    ``bins[i][d]`` is the angle bin after ``d + 1`` steps, ``keys[i][d]`` the
    magnitude bin a test of that bin would report (``-1`` for a miss), and
    ``tails[i][d]`` the discounted random-policy return from depth ``d``.
    """

    states: List[List[List[float]]]
    bins: List[List[int]]
    keys: List[List[int]]
    tails: List[List[float]]


def sample_paths(g: GeneratorState, starts: np.ndarray, horizon: int, discount: float,
                 rng: np.random.Generator) -> SampledPaths:
    n = starts.shape[0]
    traj = np.empty((n, horizon, 4))
    cur = starts
    for d in range(horizon):
        cur = g.motion.step_many(cur, rng)
        traj[:, d] = cur
    bins, keys = _observe_batch(g, traj[..., 0], traj[..., 2], rng)
    hits = (rng.integers(g.grid.n_bins, size=(n, horizon)) == bins).astype(float)
    tails = np.zeros((n, horizon + 1))
    for d in range(horizon - 1, -1, -1):
        tails[:, d] = hits[:, d] + discount * tails[:, d + 1]
    return SampledPaths(traj.tolist(), bins.tolist(), keys.tolist(), tails.tolist())


class TreeSearch:
    """Runs POMCP simulations for one target from its current belief."""

    def __init__(self, generator: GeneratorState, settings: PlannerSettings,
                 rng: np.random.Generator):
        self.generator = generator
        self.settings = settings
        self.rng = rng
        self.n_actions = generator.grid.n_bins

    def run(self, belief: BeliefSet, root: Optional[SearchNode] = None) -> SearchNode:
        if root is None:
            root = SearchNode(self.n_actions)
        s = self.settings
        starts = belief.particles[self.rng.integers(belief.size, size=s.n_sim)]
        paths = sample_paths(self.generator, starts, s.horizon, s.discount, self.rng)
        for i in range(s.n_sim):
            self._simulate(root, paths.states[i], paths.bins[i], paths.keys[i], paths.tails[i])
        return root

    def _simulate(self, root: SearchNode, states: List[List[float]], bins: List[int],
                  keys: List[int], tails: List[float]) -> float:
        s = self.settings
        node = root
        path: List[Tuple[SearchNode, int, float]] = []
        depth = 0
        tail = 0.0
        while depth < s.horizon:
            action = node.select_action(s.c_ucb)
            if bins[depth] == action:
                reward = 1.0
                key = keys[depth] if keys[depth] >= 0 else None
            else:
                reward = 0.0
                key = None
            path.append((node, action, reward))
            state = states[depth]
            depth += 1
            child = node.children.get((action, key))
            if child is None:
                child = SearchNode(self.n_actions)
                child.particles.append(state)
                node.children[(action, key)] = child
                tail = tails[depth]
                break
            if len(child.particles) < s.max_node_particles:
                child.particles.append(state)
            node = child
        value = tail
        for node, action, reward in reversed(path):
            value = reward + s.discount * value
            node.update(action, value)
        return value


def plan(belief: BeliefSet, g: GeneratorState, n_sim: int, c_ucb: float,
         rng: np.random.Generator, settings: Optional[PlannerSettings] = None,
         root: Optional[SearchNode] = None) -> Action:
    """Run *n_sim* simulations and return the best root action."""
    settings = dataclasses.replace(settings or PlannerSettings(), n_sim=n_sim, c_ucb=c_ucb)
    return TreeSearch(g, settings, rng).run(belief, root).best_action()

# ---------------------------------------------------------------------------
# Per-target planner
# ---------------------------------------------------------------------------

class TargetPlanner:
    """One target's tree, belief, generator, history and RNG stream."""

    def __init__(self, target_id: int, belief: BeliefSet, generator: GeneratorState,
                 settings: PlannerSettings, rng: np.random.Generator):
        self.target_id = target_id
        self.belief = belief
        self.generator = generator
        self.settings = settings
        self.rng = rng
        self.root: Optional[SearchNode] = None
        self.history: History = []
        self.misses = 0
        self.anchor_bin = belief.mean_bin(generator.grid)

    def plan(self) -> Action:
        root = self.root if self.settings.reuse_tree else None
        self.root = TreeSearch(self.generator, self.settings, self.rng).run(self.belief, root)
        return self.root.best_action()

    def ranked_actions(self) -> List[int]:
        if self.root is None:
            return list(range(self.generator.grid.n_bins))
        return self.root.ranked_actions()

    def predicted_state(self) -> TargetState:
        return predict_mean(self.belief, self.generator.motion)

    def observe(self, action: Action, observation: Observation) -> None:
        """Refresh sigma_hat on detection, filter the belief, advance the tree.

        After every ``reseed_after`` consecutive empty dwells part of the
        belief is scattered around the last detected bin.
        """
        s = self.settings
        if observation.detected:
            self.generator = refresh_sigma(self.generator, observation.sigma_hat)
        child = self.root.children.get((action, observation.key)) if self.root is not None else None
        self.belief = update_belief(self.belief, action, observation, self.generator,
                                    self.rng, s.n_particles, s.max_attempts_factor,
                                    seeds=child.particles if child is not None else None,
                                    reinvigoration=s.reinvigoration)
        if observation.detected:
            self.misses = 0
            self.anchor_bin = action
        else:
            self.misses += 1
            if (s.reseed_after > 0 and self.misses % s.reseed_after == 0
                    and self.anchor_bin is not None):
                self.belief = reseed_belief(self.belief, self.anchor_bin, self.generator.grid,
                                            s.reseed_fraction, self.rng, exclude_bin=action)
        self.history.append((action, observation.key))
        self.root = child if s.reuse_tree else None
