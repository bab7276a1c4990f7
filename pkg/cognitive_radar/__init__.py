"""Power-aware cognitive massive-MIMO radar simulator.

Per-target POMCP planners pick an angle bin each step, a max-min
beampattern design splits the transmit power between the chosen bins, and
a Wald-type detector closes the loop.
"""

from cognitive_radar.engine import MetricsRecord, MonteCarloResult, run_episode, run_monte_carlo
from cognitive_radar.errors import (
    AcquisitionError,
    BinCollisionError,
    CognitiveRadarError,
    FieldOfViewError,
    ScenarioError,
    SimulationError,
)
from cognitive_radar.report import TOOL_VERSION
from cognitive_radar.scenario import PRESETS, ScenarioConfig, TargetSpec, load_scenario

__version__ = TOOL_VERSION

__all__ = [
    "AcquisitionError",
    "BinCollisionError",
    "CognitiveRadarError",
    "FieldOfViewError",
    "MetricsRecord",
    "MonteCarloResult",
    "PRESETS",
    "ScenarioConfig",
    "ScenarioError",
    "SimulationError",
    "TargetSpec",
    "load_scenario",
    "run_episode",
    "run_monte_carlo",
]
