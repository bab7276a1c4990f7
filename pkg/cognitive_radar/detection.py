"""Wald-type detector, disturbance model and observation discretisation.

Under H0 the normalised statistic ``2|alpha_hat|^2 / sigma_hat^2`` is
chi-square with two degrees of freedom; under H1 it is noncentral with
noncentrality ``2 |alpha|^2 / sigma_hat^2``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import lfilter
from scipy.stats import ncx2

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class DisturbanceModel:
    """Circular complex Gaussian disturbance, white or AR(1) across channels.

    Covariance ``Sigma[i, j] = sigma_c^2 * rho^|i - j|``.
    """

    sigma_c: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if not self.sigma_c > 0:
            raise ValueError(f"sigma_c must be positive, got {self.sigma_c}")
        if not -1 < self.rho < 1:
            raise ValueError(f"AR(1) coefficient must lie in (-1, 1), got {self.rho}")

    def covariance(self, n: int) -> np.ndarray:
        return self.sigma_c ** 2 * toeplitz(self.rho ** np.arange(n))

    def quadratic_form(self, v: np.ndarray) -> float:
        """``v^H Sigma v`` in O(N)."""
        norm2 = float(np.vdot(v, v).real)
        if self.rho == 0.0:
            return self.sigma_c ** 2 * norm2
        # s_j = sum_{i <= j} rho^(j-i) v_i; the full sum is the causal part,
        # its conjugate transpose, minus the double-counted diagonal.
        s = lfilter([1.0], [1.0, -self.rho], v)
        return self.sigma_c ** 2 * (2.0 * float(np.vdot(v, s).real) - norm2)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        e = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (self.sigma_c / math.sqrt(2.0))
        if self.rho == 0.0:
            return e
        e[1:] *= math.sqrt(1.0 - self.rho ** 2)
        return lfilter([1.0], [1.0, -self.rho], e)


@dataclass(frozen=True)
class Observation:
    """Empty, or a detection carrying ``|alpha_hat|`` and its magnitude bin."""

    detected: bool = False
    raw_mag: Optional[float] = None
    disc_bin: Optional[int] = None
    sigma_hat: Optional[float] = None

    @property
    def kind(self) -> str:
        return "Detected" if self.detected else "Empty"

    @property
    def key(self) -> Optional[int]:
        """Tree key: ``None`` for Empty, otherwise the magnitude bin."""
        return self.disc_bin

    @classmethod
    def detection(cls, raw_mag: float, sigma_hat: float) -> "Observation":
        return cls(True, float(raw_mag), discretize(raw_mag, sigma_hat), float(sigma_hat))


EMPTY = Observation()


@dataclass(frozen=True)
class DetectionOutcome:
    lambda_stat: float
    alpha_hat: complex
    sigma_hat: float
    detected: bool
    bin: int

    @property
    def observation(self) -> Observation:
        if not self.detected:
            return EMPTY
        return Observation.detection(abs(self.alpha_hat), self.sigma_hat)


def threshold_for(p_fa: float) -> float:
    """Threshold giving false-alarm probability *p_fa* for the chi-square(2) statistic."""
    if not 0 < p_fa < 1:
        raise ValueError(f"p_fa must lie in (0, 1), got {p_fa}")
    return -2.0 * math.log(p_fa)


def sigma_hat(v: np.ndarray, disturbance: DisturbanceModel) -> float:
    """``sqrt(v^H Sigma v) / ||v||^2``: standard deviation of ``alpha_hat``."""
    norm2 = float(np.vdot(v, v).real)
    if norm2 == 0.0:
        raise ValueError("sigma_hat undefined for a zero virtual-array vector")
    return math.sqrt(disturbance.quadratic_form(v)) / norm2


def wald_statistic(alpha_hat: complex, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError(f"sigma_hat must be positive, got {sigma}")
    return 2.0 * abs(alpha_hat) ** 2 / sigma ** 2


def discretize(raw_mag: float, sigma: float) -> int:
    """Magnitude bin ``floor(raw / (sqrt(3) * sigma_hat))``."""
    return int(math.floor(raw_mag / (SQRT3 * sigma)))


def detect(alpha_hat: complex, sigma: float, threshold: float, bin_index: int) -> DetectionOutcome:
    stat = wald_statistic(alpha_hat, sigma)
    return DetectionOutcome(stat, complex(alpha_hat), float(sigma), stat >= threshold, bin_index)


def pd_oracle(snr_out: float, threshold: float) -> float:
    """Detection probability ``Q1(sqrt(2 snr_out), sqrt(threshold))``."""
    if snr_out < 0:
        raise ValueError(f"snr_out must be non-negative, got {snr_out}")
    if snr_out == 0:
        return math.exp(-threshold / 2.0)
    return float(ncx2.sf(threshold, 2, 2.0 * snr_out))


def simulate_statistics(alpha: complex, sigma: float, n_trials: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Wald statistics of ``n_trials`` draws ``alpha_hat ~ CN(alpha, sigma^2)``."""
    noise = (rng.standard_normal(n_trials) + 1j * rng.standard_normal(n_trials)) * (sigma / math.sqrt(2.0))
    return 2.0 * np.abs(alpha + noise) ** 2 / sigma ** 2


def empirical_detection_rate(snr_out: float, threshold: float, n_trials: int,
                             rng: np.random.Generator, chunk: int = 1_000_000) -> float:
    """Monte Carlo detection rate at output SNR ``|alpha|^2 / sigma_hat^2``."""
    alpha = math.sqrt(snr_out)
    hits = 0
    done = 0
    while done < n_trials:
        n = min(chunk, n_trials - done)
        hits += int(np.count_nonzero(simulate_statistics(alpha, 1.0, n, rng) >= threshold))
        done += n
    return hits / n_trials


def empirical_false_alarm_rate(p_fa: float, n_trials: int, rng: np.random.Generator) -> float:
    return empirical_detection_rate(0.0, threshold_for(p_fa), n_trials, rng)
