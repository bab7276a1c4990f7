"""Transmit waveform synthesis: orthogonal scan, uniform multi-beam and the
power-aware max-min design.

Beam strategies restrict the covariance to ``R = sum_m p_m b_m b_m^H`` with
``b_m`` the unit-norm conjugate steering vector toward target m, which turns
the max-min beampattern problem into a linear program over the powers.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from cognitive_radar.array import AngleGrid, beampattern, steer

# Off-diagonal cross-gain, relative to the largest main-lobe gain, below which
# beams count as orthogonal and the closed-form allocation is used.
ORTHOGONAL_TOL = 1e-12


@dataclass
class WaveformSpec:
    W: np.ndarray
    R: np.ndarray
    powers: np.ndarray
    strategy: str
    angles: Tuple[float, ...] = ()

    def beampattern(self, theta_deg: float) -> float:
        return beampattern(self.R, theta_deg)

    def check(self, p_total: float, tol: float = 1e-10) -> None:
        """Raise ``ValueError`` if the power or factorisation invariants fail."""
        if not np.allclose(self.W @ self.W.conj().T, self.R, rtol=0, atol=tol):
            raise ValueError("W W^H differs from R")
        trace = float(np.real(np.trace(self.R)))
        if abs(trace - p_total) > tol * max(1.0, p_total):
            raise ValueError(f"Tr(R) = {trace!r}, expected {p_total!r}")
        if np.linalg.eigvalsh(self.R).min() < -tol:
            raise ValueError("R is not positive semidefinite")
        if self.strategy != "orthogonal" and abs(self.powers.sum() - p_total) > tol * max(1.0, p_total):
            raise ValueError("allocated powers do not sum to the total power")


@dataclass(frozen=True)
class TargetWeight:
    """Predicted angle (degrees) and power weight ``delta = 1 / R^4`` of one target."""

    theta: float
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


def orthogonal_waveform(n_tx: int, p_total: float) -> WaveformSpec:
    """``W = sqrt(P_T / N_T) I``: isotropic beampattern equal to ``P_T``."""
    if n_tx < 1 or not p_total > 0:
        raise ValueError("orthogonal waveform needs n_tx >= 1 and p_total > 0")
    W = math.sqrt(p_total / n_tx) * np.eye(n_tx, dtype=complex)
    return WaveformSpec(W, W @ W.conj().T, np.empty(0), "orthogonal")


def beam_vector(theta_deg: float, n_tx: int) -> np.ndarray:
    return np.conj(steer(theta_deg, n_tx)) / math.sqrt(n_tx)


def gain_matrix(thetas: Sequence[float], n_tx: int) -> np.ndarray:
    """``G[k, m] = |a_T^T(theta_k) b_m|^2``: gain of beam m toward target k."""
    steering = np.array([steer(t, n_tx) for t in thetas])
    beams = np.array([beam_vector(t, n_tx) for t in thetas]).T
    return np.abs(steering @ beams) ** 2


def _beam_waveform(thetas: Sequence[float], powers: np.ndarray, n_tx: int,
                   strategy: str) -> WaveformSpec:
    if len(thetas) > n_tx:
        raise ValueError(f"{len(thetas)} beams exceed the {n_tx} transmit elements")
    W = np.zeros((n_tx, n_tx), dtype=complex)
    for m, (theta, p) in enumerate(zip(thetas, powers)):
        W[:, m] = math.sqrt(p) * beam_vector(theta, n_tx)
    return WaveformSpec(W, W @ W.conj().T, np.asarray(powers, dtype=float), strategy,
                        tuple(thetas))


def _require_distinct(values: Sequence, what: str) -> None:
    if len(set(values)) != len(values):
        raise ValueError(f"duplicate {what}: {list(values)} (targets may not overlap)")


def uniform_waveform(bins: Sequence[int], grid: AngleGrid, n_tx: int,
                     p_total: float) -> WaveformSpec:
    """Equal power ``P_T / M`` on a beam at each bin center."""
    if not bins:
        raise ValueError("uniform waveform needs at least one bin")
    _require_distinct(list(bins), "angle bins")
    thetas = [grid.center(b) for b in bins]
    powers = np.full(len(bins), p_total / len(bins))
    return _beam_waveform(thetas, powers, n_tx, "uniform")


def max_min_allocation(gains: np.ndarray, deltas: Sequence[float],
                       p_total: float) -> Tuple[np.ndarray, float]:
    """Solve ``max_p min_k delta_k (G p)_k`` s.t. ``sum(p) = P_T, p >= 0``.

    Returns the allocation and the optimal value.
    """
    G = np.asarray(gains, dtype=float)
    delta = np.asarray(deltas, dtype=float)
    M = delta.size
    scale = delta.max()
    H = (delta / scale)[:, None] * G

    off = G - np.diag(np.diag(G))
    if np.abs(off).max(initial=0.0) <= ORTHOGONAL_TOL * np.diag(G).max():
        inv = 1.0 / np.diag(H)
        p = inv / inv.sum()
    else:
        # variables [p_1..p_M, t]; maximise t subject to t <= (H p)_k
        c = np.zeros(M + 1)
        c[-1] = -1.0
        A_ub = np.hstack([-H, np.ones((M, 1))])
        A_eq = np.zeros((1, M + 1))
        A_eq[0, :M] = 1.0
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(M), A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * M + [(None, None)], method="highs")
        if not res.success:
            raise RuntimeError(f"max-min power allocation failed: {res.message}")
        p = np.clip(res.x[:M], 0.0, None)
        p /= p.sum()
    p = p * p_total
    value = float((H @ p).min() * scale)
    return p, value


def power_aware_waveform(weights: Sequence[TargetWeight], n_tx: int,
                         p_total: float) -> WaveformSpec:
    """Max-min weighted beampattern design over beams at the predicted angles."""
    if not weights:
        raise ValueError("power-aware waveform needs at least one target weight")
    thetas = [w.theta for w in weights]
    _require_distinct(thetas, "target angles")
    powers, _ = max_min_allocation(gain_matrix(thetas, n_tx),
                                   [w.delta for w in weights], p_total)
    return _beam_waveform(thetas, powers, n_tx, "power-aware")


def predict_delta(predicted_state) -> float:
    """Radar-equation power weight ``1 / R^4`` of a predicted state."""
    r = math.hypot(predicted_state.x, predicted_state.y)
    if not r > 0:
        raise ValueError("power weight undefined at zero range")
    return 1.0 / r ** 4


def synthesize(strategy: str, bins: Sequence[int], grid: AngleGrid, n_tx: int,
               p_total: float, deltas: Optional[Sequence[float]] = None) -> WaveformSpec:
    """Build the waveform of *strategy* for the chosen bins."""
    if strategy == "orthogonal":
        return orthogonal_waveform(n_tx, p_total)
    if strategy == "uniform":
        return uniform_waveform(bins, grid, n_tx, p_total)
    if strategy == "power-aware":
        if deltas is None:
            raise ValueError("power-aware strategy needs predicted power weights")
        _require_distinct(list(bins), "angle bins")
        weights = [TargetWeight(grid.center(b), d) for b, d in zip(bins, deltas)]
        return power_aware_waveform(weights, n_tx, p_total)
    raise ValueError(f"unknown waveform strategy '{strategy}'")
