#!/usr/bin/env python3
"""Sweep the oracle radius over one fixed corpus.

Grows a corpus of small-step mutants around decision-boundary seeds, then
recomputes the adversarial set at several radii. The sets are nested by
construction of the oracle, so the printed sizes must be non-decreasing;
the sweep shows how much of the corpus each radius admits.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from lstmcov.coverage import ThresholdConfig, default_metrics, estimate_thresholds
from lstmcov.fuzzer import FuzzConfig, recompute_adversarial, run
from lstmcov.mutation import MutationConfig
from lstmcov.synth import make_blob_seeds, make_row_classifier, near_boundary_inputs


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--radii", type=float, nargs="+",
                        default=[0.002, 0.005, 0.01])
    parser.add_argument("--max-cases", type=int, default=2000)
    parser.add_argument("--sigma", type=float, default=5e-5,
                        help="gaussian mutation step")
    parser.add_argument("--boundary-seeds", type=int, default=20)
    args = parser.parse_args(argv)

    model = make_row_classifier()
    training = [s.input for s in make_blob_seeds(500, seed=1000)]
    thresholds = estimate_thresholds(model, training, ThresholdConfig())

    pool = [s.input for s in make_blob_seeds(60, seed=4000)]
    seeds = near_boundary_inputs(model, pool, count=args.boundary_seeds, seed=1)
    print(f"{len(seeds)} seeds bisected to the decision boundary")

    cfg = FuzzConfig(max_cases=args.max_cases, stall_window=10**9,
                     rng_seed=8, oracle_radius=None)
    corpus, report = run(model, seeds, thresholds, default_metrics(), cfg,
                         MutationConfig(gaussian_sigma=args.sigma))
    print(f"{report.generated_count} cases generated; "
          f"{len(report.adversarial_ids)} flip their origin's prediction\n")

    print(f"{'radius':>10} {'adversarial':>12} {'rate':>7}")
    previous: set[int] = set()
    for radius in sorted(args.radii):
        ids = set(recompute_adversarial(corpus, model,
                                        replace(cfg, oracle_radius=radius)))
        assert previous <= ids, "oracle sets must be nested"
        previous = ids
        print(f"{radius:>10} {len(ids):>12} {len(ids) / report.generated_count:>7.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
