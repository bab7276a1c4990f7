#!/usr/bin/env python3
"""Compare the max-min power allocation against exhaustive simplex search.

For random instances (8 transmit elements, 2 or 3 targets in distinct bins,
power weights spread over four orders of magnitude) the allocation's
objective must match the best point of a 1e-3 simplex grid within 1e-3
relative, and the synthesised waveform must satisfy W W^H = R and
Tr(R) = P_T to 1e-10. Also checks the closed-form equalisation for two
exactly orthogonal beams with weights (1, 1/16).

Usage:
    python scripts/check_waveform_oracle.py [--instances N] [--seed S]
"""

import argparse
import math
import sys
import time

import numpy as np

from cognitive_radar.array import AngleGrid
from cognitive_radar.waveform import (
    TargetWeight,
    gain_matrix,
    max_min_allocation,
    power_aware_waveform,
)

N_TX = 8
N_BINS = 16
GRID_STEP = 1e-3
REL_TOL = 1e-3


def simplex_grid(m, step):
    """All points of the probability simplex in R^m on a regular grid."""
    n = int(round(1.0 / step))
    if m == 2:
        a = np.arange(n + 1)
        pts = np.stack([a, n - a], axis=1)
    elif m == 3:
        a, b = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing='ij')
        keep = a + b <= n
        a, b = a[keep], b[keep]
        pts = np.stack([a, b, n - a - b], axis=1)
    else:
        raise ValueError('grid search supports 2 or 3 targets')
    return pts / n


def grid_optimum(gains, deltas, p_total, step=GRID_STEP):
    pts = simplex_grid(len(deltas), step) * p_total
    values = (pts @ gains.T) * np.asarray(deltas)
    return float(values.min(axis=1).max())


def random_instance(rng, grid):
    m = int(rng.integers(2, 4))
    bins = sorted(rng.choice(grid.n_bins, size=m, replace=False).tolist())
    thetas = [grid.center(b) for b in bins]
    deltas = 10.0 ** rng.uniform(-4.0, 0.0, size=m)
    return thetas, deltas


def check_equalisation(p_total=1.0):
    thetas = [0.0, math.degrees(math.asin(2.0 / N_TX))]
    deltas = [1.0, 1.0 / 16.0]
    p, _ = max_min_allocation(gain_matrix(thetas, N_TX), deltas, p_total)
    expected = np.array([1.0, 16.0]) / 17.0 * p_total
    spec = power_aware_waveform([TargetWeight(t, d) for t, d in zip(thetas, deltas)],
                                N_TX, p_total)
    weighted = [d * spec.beampattern(t) for t, d in zip(thetas, deltas)]
    ok = np.allclose(p, expected, rtol=0, atol=1e-9) and math.isclose(
        weighted[0], weighted[1], rel_tol=1e-9)
    return p, weighted, ok


def main():
    parser = argparse.ArgumentParser(
        description='Check the max-min waveform allocation against grid search')
    parser.add_argument('--instances', type=int, default=50,
                        help='Random instances (default: 50)')
    parser.add_argument('--seed', type=int, default=0, help='RNG seed')
    parser.add_argument('--p-total', type=float, default=1.0, help='Total power')
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    grid = AngleGrid(N_BINS)
    failures = 0
    start = time.monotonic()

    for i in range(args.instances):
        thetas, deltas = random_instance(rng, grid)
        gains = gain_matrix(thetas, N_TX)
        _, value = max_min_allocation(gains, deltas, args.p_total)
        best = grid_optimum(gains, deltas, args.p_total)
        rel = abs(value - best) / value
        spec = power_aware_waveform([TargetWeight(t, d) for t, d in zip(thetas, deltas)],
                                    N_TX, args.p_total)
        try:
            spec.check(args.p_total, tol=1e-10)
            invariants = True
        except ValueError as exc:
            invariants = False
            print(f"WARN: instance {i}: {exc}")
        ok = rel <= REL_TOL and invariants and value >= best * (1 - 1e-12)
        failures += not ok
        if not ok:
            print(f"WARN: instance {i} (M={len(thetas)}): LP {value:.6g} vs grid {best:.6g} "
                  f"(relative {rel:.2e})")

    print(f"{'OK' if not failures else 'WARN'}: {args.instances - failures}/{args.instances} "
          f"instances within {REL_TOL:g} of grid search")

    p, weighted, ok = check_equalisation(args.p_total)
    failures += not ok
    print(f"{'OK' if ok else 'WARN'}: orthogonal-beam allocation {p.round(12).tolist()}, "
          f"weighted beampatterns {weighted[0]:.12g} / {weighted[1]:.12g}")

    print(f"\n{'=' * 60}")
    print(f"{failures} failure(s); {time.monotonic() - start:.1f}s")
    return 1 if failures else 0


if __name__ == '__main__':
    sys.exit(main())
