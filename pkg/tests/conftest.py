import os

import numpy as np
import pytest

from cognitive_radar.scenario import ScenarioConfig, TargetSpec

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(REPO_ROOT, "scenarios")


def make_config(**overrides) -> ScenarioConfig:
    """Two well-separated, strong targets on a coarse grid; fast to simulate."""
    base = dict(
        name="small",
        targets=[TargetSpec(20.0, 0.05, -10.0, 0.01, snr_db=5.0),
                 TargetSpec(20.0, 0.02, 10.0, 0.03, snr_db=5.0)],
        dt=1.0, t_max=6, n_tx=8, n_rx=8, n_bins=10, p_fa=1e-2,
        n_sim=60, n_particles=200, n_runs=2, max_scan_dwells=20, seed=3,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture
def small_config():
    return make_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
