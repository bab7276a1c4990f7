#!/usr/bin/env python3
"""Reproduce the strategy trends on the desk preset over repeated batches.

Runs all three strategies for several master seeds and checks, on the
weakest target over the final quarter of the horizon:

  * power-aware detection rate >= uniform in at least 8 of 10 batches
  * orthogonal detection rate at least 0.1 below both adaptive strategies
  * adaptive position RMSE below its value at acquisition

The last two are evaluated on the runs pooled over every batch.

Usage:
    python scripts/check_trends.py [--batches 10] [--runs 20] [--workers 4]
"""

import argparse
import sys
import time

from cognitive_radar.engine import MonteCarloResult, run_monte_carlo, summarize
from cognitive_radar.report import final_quarter_mean, trend_checks, weakest_target
from cognitive_radar.scenario import STRATEGIES, desk_scenario

REQUIRED_BATCHES = 0.8


def run_batch(config, seed, runs, workers):
    batch = config.replace(seed=seed)
    return {s: run_monte_carlo(batch, runs, s, workers) for s in STRATEGIES}


def pool(batches):
    pooled = {}
    for strategy in STRATEGIES:
        records = []
        for b, results in enumerate(batches):
            for rec in results[strategy].records:
                rec.run_id = b * 100_000 + rec.run_id
                records.append(rec)
        pooled[strategy] = MonteCarloResult(strategy, records, summarize(records))
    return pooled


def main():
    parser = argparse.ArgumentParser(description='Check desk-scale strategy trends')
    parser.add_argument('--batches', type=int, default=10, help='Batch seeds (default: 10)')
    parser.add_argument('--runs', type=int, default=None, help='Runs per batch (default: preset)')
    parser.add_argument('--workers', type=int, default=1, help='Parallel run processes')
    parser.add_argument('--n-sim', type=int, default=None,
                        help='Override tree simulations and particles per step')
    args = parser.parse_args()

    config = desk_scenario()
    if args.n_sim:
        config = config.replace(n_sim=args.n_sim, n_particles=args.n_sim)
    runs = args.runs or config.n_runs
    start = time.monotonic()

    batches = []
    wins = 0
    for seed in range(args.batches):
        results = run_batch(config, seed, runs, args.workers)
        batches.append(results)
        target = weakest_target(results)
        pa = final_quarter_mean(results['power-aware'], target, 'pd_mean', config.t_max)
        un = final_quarter_mean(results['uniform'], target, 'pd_mean', config.t_max)
        won = pa >= un
        wins += won
        print(f"{'OK' if won else 'WARN'}: batch {seed}: target {target} "
              f"power-aware {pa:.3f} vs uniform {un:.3f}")

    failures = 0
    needed = int(round(REQUIRED_BATCHES * args.batches))
    ok = wins >= needed
    failures += not ok
    print(f"{'OK' if ok else 'WARN'}: power-aware >= uniform in {wins}/{args.batches} batches "
          f"(need {needed})")

    pooled = pool(batches)
    for check in trend_checks(pooled, config.t_max):
        if check.name == 'weak_target_advantage':
            continue
        ok = check.status in ('PASS', 'SKIP')
        failures += not ok
        print(f"{'OK' if ok else 'WARN'}: {check.name}: {check.summary}")
        for f in check.findings:
            print(f"    {f.where}: {f.description}")

    print(f"\n{'=' * 60}")
    print(f"{failures} failure(s); {time.monotonic() - start:.1f}s")
    return 1 if failures else 0


if __name__ == '__main__':
    sys.exit(main())
