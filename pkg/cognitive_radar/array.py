"""Uniform-linear-array geometry: angle bins, steering vectors and the
virtual-array vector ``v = (W^T a_T) kron a_R``.

Both arrays are half-wavelength ULAs; angles are in degrees, measured from
broadside, with the field of view ``[-90, 90)``.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from cognitive_radar.errors import FieldOfViewError

FOV_LOW = -90.0
FOV_HIGH = 90.0


@dataclass(frozen=True)
class AngleGrid:
    """``n_bins`` left-closed sectors partitioning ``[-90, 90)`` degrees."""

    n_bins: int

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError(f"n_bins must be >= 1, got {self.n_bins}")

    @property
    def width(self) -> float:
        return (FOV_HIGH - FOV_LOW) / self.n_bins

    def center(self, k: int) -> float:
        return FOV_LOW + (k + 0.5) * self.width

    def centers(self) -> np.ndarray:
        return FOV_LOW + (np.arange(self.n_bins) + 0.5) * self.width

    def sector(self, k: int) -> Tuple[float, float]:
        return FOV_LOW + k * self.width, FOV_LOW + (k + 1) * self.width

    def try_bin(self, angle_deg: float) -> Optional[int]:
        """Bin of *angle_deg*, or ``None`` outside the field of view."""
        if not FOV_LOW <= angle_deg < FOV_HIGH:
            return None
        k = int(math.floor((angle_deg - FOV_LOW) / self.width))
        return min(max(k, 0), self.n_bins - 1)

    def try_bin_xy(self, x: float, y: float) -> Optional[int]:
        if x == 0.0 and y == 0.0:
            return None
        return self.try_bin(math.degrees(math.atan2(y, x)))

    def bin_of(self, target) -> int:
        """Bin of an angle in degrees or of anything with ``x``/``y`` attributes."""
        if hasattr(target, "x") and hasattr(target, "y"):
            angle = math.degrees(math.atan2(target.y, target.x))
        else:
            angle = float(target)
        k = self.try_bin(angle)
        if k is None:
            raise FieldOfViewError(angle)
        return k

    def bins_of_xy(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Vectorised bins; ``-1`` marks points outside the field of view."""
        angle = np.degrees(np.arctan2(y, x))
        inside = (angle >= FOV_LOW) & (angle < FOV_HIGH) & ((x != 0) | (y != 0))
        k = np.floor((angle - FOV_LOW) / self.width).astype(np.int64)
        k = np.clip(k, 0, self.n_bins - 1)
        return np.where(inside, k, -1)


def steer(theta_deg: float, n_elems: int) -> np.ndarray:
    """Half-wavelength ULA response ``exp(j*pi*k*sin(theta))``, k = 0..n-1."""
    k = np.arange(n_elems)
    return np.exp(1j * np.pi * k * math.sin(math.radians(theta_deg)))


def virtual_vector(W: np.ndarray, theta_deg: float, n_rx: int) -> np.ndarray:
    """``(W^T a_T(theta)) kron a_R(theta)``, length ``N_T * N_R``."""
    a_t = steer(theta_deg, W.shape[0])
    a_r = steer(theta_deg, n_rx)
    return np.kron(W.T @ a_t, a_r)


def beampattern(R: np.ndarray, theta_deg: float) -> float:
    """Transmit power density ``a_T^T R a_T^*`` toward *theta_deg*."""
    a_t = steer(theta_deg, R.shape[0])
    return float(np.real(a_t @ R @ np.conj(a_t)))
