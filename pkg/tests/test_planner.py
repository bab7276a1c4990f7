import math

import numpy as np
import pytest

from cognitive_radar.array import AngleGrid
from cognitive_radar.detection import EMPTY, Observation, threshold_for
from cognitive_radar.planner import (
    BeliefSet,
    GeneratorState,
    PlannerSettings,
    SearchNode,
    TargetPlanner,
    TreeSearch,
    generate,
    plan,
    predict_mean,
    refresh_sigma,
    reinvigorate,
    reseed_belief,
    update_belief,
)
from cognitive_radar.scenario import MotionModel, RadarEquationMap, TargetState


def make_generator(n_bins=10, sigma_hat=0.1, kappa=400.0, sigma_s=0.004, p_fa=1e-2):
    return GeneratorState(sigma_hat, MotionModel(1.0, sigma_s), RadarEquationMap(kappa),
                          threshold_for(p_fa), AngleGrid(n_bins))


def cloud(rng, n=500, r=20.0, angle=9.0, spread=0.5):
    """Particles scattered around a target at *angle* degrees, *r* km."""
    centre = np.array([r * math.cos(math.radians(angle)), 0.0,
                       r * math.sin(math.radians(angle)), 0.0])
    parts = np.tile(centre, (n, 1))
    parts[:, [0, 2]] += rng.normal(0.0, spread, size=(n, 2))
    parts[:, [1, 3]] += rng.normal(0.0, 0.01, size=(n, 2))
    return BeliefSet(parts, target_id=1)

# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

def test_generator_reward_is_hit_indicator(rng):
    g = make_generator()
    s = TargetState(20.0 * math.cos(math.radians(9.0)), 0.0, 20.0 * math.sin(math.radians(9.0)), 0.0)
    for action in range(10):
        for _ in range(20):
            nxt, obs, reward = generate(s, action, g, rng)
            assert reward in (0.0, 1.0)
            assert reward == (1.0 if g.grid.try_bin_xy(nxt.x, nxt.y) == action else 0.0)
            if reward == 0.0:
                assert obs is EMPTY


def test_generator_detection_carries_sigma_and_bin(rng):
    g = make_generator(sigma_s=0.0)
    s = TargetState(20.0 * math.cos(math.radians(9.0)), 0.0, 20.0 * math.sin(math.radians(9.0)), 0.0)
    detections = [generate(s, 5, g, rng)[1] for _ in range(50)]
    assert all(o.detected for o in detections)
    assert {o.sigma_hat for o in detections} == {0.1}
    # |alpha| = 1 on a sigma of 0.1 falls mostly in magnitude bin 5
    assert np.mean([o.key == 5 for o in detections]) > 0.5


def test_generator_outside_fov_is_empty_with_no_reward(rng):
    g = make_generator()
    s = TargetState(1.0, -5.0, 1.0, 0.0)
    for action in range(10):
        nxt, obs, reward = generate(s, action, g, rng)
        assert nxt.x < 0
        assert obs is EMPTY
        assert reward == 0.0


def test_generator_draws_only_what_a_step_needs():
    g = make_generator(sigma_s=0.0)
    s = TargetState(20.0 * math.cos(math.radians(9.0)), 0.0, 20.0 * math.sin(math.radians(9.0)), 0.0)
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    for _ in range(25):
        generate(s, 5, g, a)
        b.random()
        b.standard_normal(2)
    # a miss on a static target consumes nothing
    generate(s, 0, g, a)
    assert a.random() == b.random()


def test_generator_is_reproducible_from_a_seed():
    g = make_generator()
    s = TargetState(20.0 * math.cos(math.radians(9.0)), 0.0, 20.0 * math.sin(math.radians(9.0)), 0.0)
    runs = []
    for _ in range(2):
        rng = np.random.default_rng(9)
        runs.append([generate(s, action % 10, g, rng) for action in range(40)])
    assert runs[0] == runs[1]


def test_refresh_sigma_replaces_beta():
    g = make_generator()
    h = refresh_sigma(g, 0.4)
    assert h.sigma_hat == 0.4
    assert h.beta == pytest.approx(math.sqrt(3) * 0.4)
    assert refresh_sigma(h, 0.4) is h
    with pytest.raises(ValueError):
        refresh_sigma(g, 0.0)


def test_larger_sigma_never_raises_detection_rate(rng):
    g = make_generator(sigma_s=0.0)
    s = TargetState(20.0 * math.cos(math.radians(9.0)), 0.0, 20.0 * math.sin(math.radians(9.0)), 0.0)
    rates = []
    for sigma in (0.05, 0.2, 0.5, 1.0):
        h = refresh_sigma(g, sigma)
        rates.append(np.mean([generate(s, 5, h, rng)[1].detected for _ in range(3000)]))
    for hi, lo in zip(rates, rates[1:]):
        assert lo <= hi + 0.02
    assert rates[0] - rates[-1] > 0.5

# ---------------------------------------------------------------------------
# Search tree
# ---------------------------------------------------------------------------

def test_ucb_tries_untried_actions_in_index_order():
    node = SearchNode(3)
    assert node.best_action() == 0
    for expected, value in zip(range(3), (0.5, 1.0, 0.0)):
        action = node.select_action(math.sqrt(2))
        assert action == expected
        node.update(action, value)
    assert node.select_action(0.0) == 1
    assert node.best_action() == 1
    assert node.ranked_actions() == [1, 0, 2]
    assert node.visits == sum(node.action_visits) == 3


def test_update_keeps_running_mean():
    node = SearchNode(2)
    for v in (1.0, 0.0, 0.5, 0.5):
        node.update(1, v)
    assert node.action_values[1] == pytest.approx(0.5)
    assert node.action_visits[1] == 4


def test_visit_counts_are_consistent_through_the_tree(rng):
    g = make_generator()
    root = TreeSearch(g, PlannerSettings(n_sim=300, horizon=4), rng).run(cloud(rng))
    assert root.visits == 300
    stack = [root]
    while stack:
        node = stack.pop()
        assert node.visits == sum(node.action_visits)
        stack.extend(node.children.values())
    assert root.count_nodes() > 1


def test_tree_grows_by_at_most_one_node_per_simulation(rng):
    g = make_generator()
    belief = cloud(rng)
    search = TreeSearch(g, PlannerSettings(n_sim=400, horizon=5), rng)
    root = search.run(belief)
    first = root.count_nodes()
    assert first <= 400 + 1
    search.run(belief, root)
    assert root.count_nodes() <= first + 400
    assert root.visits == 800


def test_belief_straddling_two_bins_never_selects_a_third(rng):
    g = make_generator(sigma_hat=1e-3, sigma_s=0.0)
    states = ([TargetState(10 * math.cos(math.radians(-9.0)), 0.0,
                           10 * math.sin(math.radians(-9.0)), 0.0)] * 5
              + [TargetState(10 * math.cos(math.radians(9.0)), 0.0,
                             10 * math.sin(math.radians(9.0)), 0.0)] * 5)
    belief = BeliefSet.from_states(states)
    # one step of lookahead caps any third bin at discount * 1
    settings = PlannerSettings(horizon=2)
    for _ in range(20):
        assert plan(belief, g, 2000, math.sqrt(2), rng, settings) in (4, 5)


def test_planner_finds_the_target_bin(rng):
    g = make_generator(n_bins=3, sigma_s=0.0)
    belief = BeliefSet.from_states([TargetState(10.0, 0.0, 0.0, 0.0)] * 10)
    assert plan(belief, g, 300, math.sqrt(2), rng) == 1


@pytest.mark.slow
def test_planner_finds_the_target_bin_over_many_trials():
    g = make_generator(n_bins=3, sigma_s=0.0)
    belief = BeliefSet.from_states([TargetState(10.0, 0.0, 0.0, 0.0)] * 10)
    rng = np.random.default_rng(0)
    hits = sum(plan(belief, g, 2000, math.sqrt(2), rng) == 1 for _ in range(200))
    assert hits >= 190

# ---------------------------------------------------------------------------
# Belief update
# ---------------------------------------------------------------------------

def test_update_after_detection_conserves_particles_inside_fov(rng):
    g = make_generator()
    belief = cloud(rng)
    obs = Observation.detection(1.0, 0.1)
    updated = update_belief(belief, 5, obs, g, rng)
    assert updated.size == belief.size
    assert updated.target_id == 1
    bins = g.grid.bins_of_xy(updated.particles[:, 0], updated.particles[:, 2])
    assert (bins == 5).mean() > 0.9
    assert (bins >= 0).all()


def test_update_can_resize_belief(rng):
    g = make_generator()
    updated = update_belief(cloud(rng), 5, Observation.detection(1.0, 0.1), g, rng, n_particles=300)
    assert updated.size == 300


def test_empty_on_a_far_bin_approximates_propagation(rng):
    g = make_generator()
    belief = cloud(rng, n=2000)
    updated = update_belief(belief, 0, EMPTY, g, rng)
    assert updated.size == 2000
    expected = predict_mean(belief, g.motion).as_array()
    np.testing.assert_allclose(updated.mean(), expected, atol=0.1)
    assert updated.covariance_trace() == pytest.approx(belief.covariance_trace(), rel=0.15)


def test_impossible_observation_falls_back_to_propagation(rng):
    g = make_generator()
    belief = cloud(rng)
    updated = update_belief(belief, 0, Observation.detection(1.0, 0.1), g, rng)
    assert updated.size == belief.size
    np.testing.assert_allclose(updated.mean(), predict_mean(belief, g.motion).as_array(), atol=0.15)


def test_predict_mean_applies_transition(rng):
    belief = cloud(rng)
    motion = MotionModel(2.0, 0.0)
    expected = motion.transition @ belief.mean()
    np.testing.assert_allclose(predict_mean(belief, motion).as_array(), expected, atol=1e-12)


def test_update_tops_up_from_seeds(rng):
    g = make_generator()
    belief = cloud(rng, n=200)
    r, a = 20.0, math.radians(-80.0)
    seeds = [[r * math.cos(a), 0.0, r * math.sin(a), 0.0]] * 50
    updated = update_belief(belief, 0, Observation.detection(1.0, 0.1), g, rng, seeds=seeds)
    assert updated.size == 200
    bins = g.grid.bins_of_xy(updated.particles[:, 0], updated.particles[:, 2])
    assert set(bins.tolist()) == {0}


def test_repeated_detections_shrink_belief_spread(rng):
    g = make_generator()
    belief = cloud(rng, spread=3.0)
    before = belief.covariance_trace()
    obs = Observation.detection(1.0, 0.1)
    for _ in range(3):
        belief = update_belief(belief, 5, obs, g, rng, reinvigoration=0.1)
        bins = g.grid.bins_of_xy(belief.particles[:, 0], belief.particles[:, 2])
        assert (bins == 5).all()
    assert belief.covariance_trace() < 0.5 * before


def test_reinvigoration_lets_an_empty_bin_leak_into_neighbours(rng):
    g = make_generator()
    # every particle sits in bin 5 and would be detected there
    belief = cloud(rng)
    stuck = update_belief(belief, 5, EMPTY, g, rng)
    assert set(g.grid.bins_of_xy(stuck.particles[:, 0], stuck.particles[:, 2]).tolist()) == {5}
    moved = update_belief(belief, 5, EMPTY, g, rng, reinvigoration=0.1)
    bins = g.grid.bins_of_xy(moved.particles[:, 0], moved.particles[:, 2])
    assert set(bins.tolist()) <= {4, 5, 6}
    assert np.isin(bins, [4, 6]).mean() > 0.02


def test_reinvigoration_after_detection_stays_in_bin(rng):
    g = make_generator()
    parts = cloud(rng).particles
    out = reinvigorate(parts, 0.5, g, 5, Observation.detection(1.0, 0.1), rng)
    assert out.shape == parts.shape
    assert (g.grid.bins_of_xy(out[:, 0], out[:, 2]) == 5).all()
    assert (out != parts).any(axis=1).mean() > 0.1


def test_reseed_scatters_over_neighbouring_bins(rng):
    grid = AngleGrid(10)
    belief = cloud(rng)
    out = reseed_belief(belief, 5, grid, 1.0, rng, exclude_bin=4)
    bins = grid.bins_of_xy(out.particles[:, 0], out.particles[:, 2])
    assert set(bins.tolist()) <= {5, 6}
    np.testing.assert_allclose(np.hypot(out.particles[:, 0], out.particles[:, 2]).mean(),
                               np.hypot(belief.particles[:, 0], belief.particles[:, 2]).mean(),
                               rtol=0.05)


def test_belief_requires_particles():
    with pytest.raises(ValueError):
        BeliefSet(np.empty((0, 4)))

# ---------------------------------------------------------------------------
# Per-target planner
# ---------------------------------------------------------------------------

def test_target_planner_observe_advances_root_and_history(rng):
    g = make_generator()
    planner = TargetPlanner(0, cloud(rng), g, PlannerSettings(n_sim=200, horizon=3), rng)
    action = planner.plan()
    child = planner.root.children.get((action, EMPTY.key))
    planner.observe(action, EMPTY)
    assert planner.history == [(action, None)]
    assert planner.root is child


def test_target_planner_refreshes_sigma_on_detection(rng):
    g = make_generator()
    planner = TargetPlanner(0, cloud(rng), g, PlannerSettings(n_sim=50, horizon=2), rng)
    action = planner.plan()
    planner.observe(action, Observation.detection(1.0, 0.2))
    assert planner.generator.sigma_hat == 0.2
    assert planner.history[-1] == (action, Observation.detection(1.0, 0.2).key)


def test_target_planner_without_reuse_drops_tree(rng):
    g = make_generator()
    planner = TargetPlanner(0, cloud(rng), g,
                            PlannerSettings(n_sim=50, horizon=2, reuse_tree=False), rng)
    assert planner.ranked_actions() == list(range(10))
    action = planner.plan()
    assert sorted(planner.ranked_actions()) == list(range(10))
    planner.observe(action, EMPTY)
    assert planner.root is None


def test_target_planner_seeds_belief_from_search_node(rng):
    g = make_generator()
    planner = TargetPlanner(0, cloud(rng), g, PlannerSettings(n_sim=300, horizon=3), rng)
    planner.plan()
    # bin 0 is far from the cloud: always tried, always empty
    child = planner.root.children[(0, EMPTY.key)]
    assert 0 < len(child.particles) <= planner.settings.max_node_particles
    for state in child.particles:
        assert g.grid.try_bin_xy(state[0], state[2]) is not None


def test_target_planner_reseeds_after_consecutive_misses(rng):
    g = make_generator()
    settings = PlannerSettings(n_sim=20, horizon=2, reinvigoration=0.0,
                               reseed_after=2, reseed_fraction=0.5)
    planner = TargetPlanner(0, cloud(rng), g, settings, rng)
    assert planner.anchor_bin == 5

    def bins():
        p = planner.belief.particles
        return g.grid.bins_of_xy(p[:, 0], p[:, 2])

    planner.observe(0, EMPTY)
    assert planner.misses == 1
    assert set(bins().tolist()) == {5}
    planner.observe(0, EMPTY)
    assert planner.misses == 2
    b = bins()
    assert set(b.tolist()) <= {4, 5, 6}
    assert np.isin(b, [4, 6]).mean() > 0.2
    planner.observe(5, Observation.detection(1.0, 0.1))
    assert planner.misses == 0
