#!/usr/bin/env python3
"""Desk-scale training run: train an algorithm, then compare the trained
policy against MaxWeight on fresh evaluation seeds.

Example:
    python scripts/train_and_eval.py --env criss_cross_bh --algo ppo-wc \
        --episodes 10 --steps 5000
"""

import argparse
import functools
import sys

from qnetsim import bench, instances, learn


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--env", default="criss_cross_bh")
    ap.add_argument("--algo", default="ppo-wc", choices=learn.ALGORITHMS)
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--actors", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval-trajectories", type=int, default=20)
    ap.add_argument("--eval-events", type=int, default=20_000)
    ap.add_argument("--checkpoint", default=None)
    args = ap.parse_args()

    cfg = instances.get_instance(args.env)
    spec = bench.spec_for(cfg)
    print(f"training {args.algo} on {args.env}: "
          f"{args.episodes} episodes x {args.steps} steps x {args.actors} actors")
    result = learn.train(spec, args.algo, args.episodes, args.steps,
                         seed=args.seed, actors=args.actors)
    for ep, mean, std in result.curve:
        print(f"  episode {ep:3d}: mean cost {mean:10.3f} (std {std:.3f})")
    if args.checkpoint:
        learn.save_checkpoint(args.checkpoint, result.policy, result.value_fn)
        print(f"checkpoint written to {args.checkpoint}")

    horizon = bench.horizon_for(cfg, args.eval_events)
    trained = bench.evaluate(
        spec, lambda s: result.policy, trajectories=args.eval_trajectories,
        horizon=horizon, seed_base=10_000, policy_name=args.algo,
    )
    baseline = bench.evaluate(
        spec, functools.partial(bench.make_policy, "maxweight"),
        trajectories=args.eval_trajectories, horizon=horizon,
        seed_base=10_000, policy_name="maxweight",
    )
    print(f"evaluation ({args.eval_trajectories} trajectories, "
          f"{horizon.max_events} events):")
    print(f"  {args.algo:<12} {trained.mean:10.3f} +/- {trained.stderr:.3f}")
    print(f"  {'maxweight':<12} {baseline.mean:10.3f} +/- {baseline.stderr:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
