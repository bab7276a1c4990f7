#!/usr/bin/env python3
"""Check the Wald detector against its closed-form operating characteristic.

Two checks, both in the analytic measurement model:

  * false-alarm rate at P_FA = 1e-3 within 15% relative over the trials
  * Monte Carlo detection probability within 0.01 absolute of the
    Marcum-Q value at several output SNRs, threshold from P_FA = 1e-4

Usage:
    python scripts/check_detector_calibration.py [--trials N] [--seed S]
"""

import argparse
import sys
import time

import numpy as np

from cognitive_radar.detection import (
    empirical_detection_rate,
    empirical_false_alarm_rate,
    pd_oracle,
    threshold_for,
)

SNR_OUT = (1.0, 5.0, 10.0, 20.0, 50.0)
FA_TOLERANCE = 0.15
PD_TOLERANCE = 0.01


def check_false_alarm(p_fa, trials, rng):
    rate = empirical_false_alarm_rate(p_fa, trials, rng)
    rel = abs(rate - p_fa) / p_fa
    return rate, rel, rel <= FA_TOLERANCE


def check_detection(snr_out, threshold, trials, rng):
    emp = empirical_detection_rate(snr_out, threshold, trials, rng)
    oracle = pd_oracle(snr_out, threshold)
    return emp, oracle, abs(emp - oracle) <= PD_TOLERANCE


def main():
    parser = argparse.ArgumentParser(
        description='Check detector false-alarm calibration and P_D against Marcum-Q')
    parser.add_argument('--trials', type=int, default=1_000_000,
                        help='Monte Carlo trials per point (default: 1e6)')
    parser.add_argument('--seed', type=int, default=0, help='RNG seed')
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    failures = 0
    start = time.monotonic()

    rate, rel, ok = check_false_alarm(1e-3, args.trials, rng)
    tag = 'OK' if ok else 'WARN'
    failures += not ok
    print(f"{tag}: false-alarm rate {rate:.6f} at P_FA 1e-3 "
          f"(relative error {rel:.1%}, limit {FA_TOLERANCE:.0%})")

    threshold = threshold_for(1e-4)
    for snr in SNR_OUT:
        emp, oracle, ok = check_detection(snr, threshold, args.trials, rng)
        tag = 'OK' if ok else 'WARN'
        failures += not ok
        print(f"{tag}: snr_out {snr:>5g}  P_D empirical {emp:.4f}  Marcum-Q {oracle:.4f}  "
              f"(|diff| {abs(emp - oracle):.4f})")

    print(f"\n{'=' * 60}")
    print(f"Threshold {threshold:.4f}; {failures} failure(s); {time.monotonic() - start:.1f}s")
    return 1 if failures else 0


if __name__ == '__main__':
    sys.exit(main())
