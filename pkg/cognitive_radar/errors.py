"""Exception hierarchy shared by the library and the command line."""

from typing import Optional


class CognitiveRadarError(Exception):
    """Base class for every error raised by this package."""


class ScenarioError(CognitiveRadarError):
    """Malformed or semantically invalid scenario configuration."""

    def __init__(self, message: str, path: Optional[str] = None,
                 line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(self.location() + message)

    def location(self) -> str:
        if self.path is None:
            return ""
        if self.line is None:
            return f"{self.path}: "
        return f"{self.path}:{self.line}: "


class SimulationError(CognitiveRadarError):
    """A run reached a state the model does not cover."""


class FieldOfViewError(SimulationError):
    def __init__(self, angle_deg: float):
        self.angle_deg = angle_deg
        super().__init__(f"target left field of view (angle {angle_deg:.3f} deg)")


class BinCollisionError(SimulationError):
    def __init__(self, bin_index: int, targets: tuple):
        self.bin_index = bin_index
        self.targets = targets
        names = ", ".join(str(t) for t in targets)
        super().__init__(f"targets {names} share angle bin {bin_index}")


class AcquisitionError(SimulationError):
    def __init__(self, dwells: int, missing: list):
        self.dwells = dwells
        self.missing = missing
        super().__init__(
            f"failed to acquire targets {missing} within {dwells} dwell(s)")
