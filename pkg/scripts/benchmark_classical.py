#!/usr/bin/env python3
"""Evaluate the classical policies on one instance and print a small table.

Example:
    python scripts/benchmark_classical.py --env criss_cross_bh \
        --trajectories 100 --events 50000 --metric waiting
"""

import argparse
import functools
import sys
import time

from qnetsim import bench, instances


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--env", default="criss_cross_bh")
    ap.add_argument("--policies", default="cmu,maxweight,maxpressure")
    ap.add_argument("--trajectories", type=int, default=100)
    ap.add_argument("--events", type=int, default=50_000)
    ap.add_argument("--seed-base", type=int, default=0)
    ap.add_argument("--metric", default="in_system", choices=bench.METRICS)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = instances.get_instance(args.env)
    spec = bench.spec_for(cfg)
    horizon = bench.horizon_for(cfg, args.events)
    print(f"{args.env}: {spec.num_queues} queues x {spec.num_servers} server classes, "
          f"{args.trajectories} trajectories x {horizon.max_events} events "
          f"({args.metric} metric)")
    print(f"{'policy':<14}{'mean':>10}{'stderr':>10}{'wall':>8}")
    for name in args.policies.split(","):
        start = time.time()
        rep = bench.evaluate(
            spec, functools.partial(bench.make_policy, name),
            trajectories=args.trajectories, horizon=horizon,
            seed_base=args.seed_base, workers=args.workers,
            policy_name=name, metric=args.metric,
        )
        print(f"{name:<14}{rep.mean:>10.3f}{rep.stderr:>10.3f}"
              f"{time.time() - start:>7.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
