"""OOD probe on PointMass2D with the model trained on the left half of the arena.

Prints Spearman and Pearson correlation of every estimator against the true
next-state error, one row per seed, and writes the records as JSON lines.

    python scripts/probe_ordering.py --seeds 0 1 2 --out probe.jsonl
"""

import argparse
import json

import numpy as np

from sumorl.agent import SacConfig
from sumorl.data import fingerprint
from sumorl.dynamics import EnsembleConfig, train_ensemble
from sumorl.envs import PointMass2D, generate_dataset, restrict_region
from sumorl.estimators import EnsembleEstimator, SumoEstimator
from sumorl.eval import ProbeConfig, estimator_comparison, ood_probe, train_probe_policy


def run(seed, args):
    ds, _ = generate_dataset(args.data, args.episodes, seed=seed)
    left = restrict_region(ds, "left")
    ens = train_ensemble(left, EnsembleConfig(epochs=args.model_epochs), seed=seed)
    policy = train_probe_policy(ens, left, args.policy_steps, seed=seed,
                                agent_config=SacConfig(hidden=tuple(args.hidden)))
    probe_cfg = ProbeConfig(policy_steps=args.policy_steps)
    probe = ood_probe(ens, policy, PointMass2D(), left, probe_cfg,
                      np.random.default_rng(seed + 1000))
    estimators = [("sumo", SumoEstimator(left))]
    estimators += [(k, EnsembleEstimator(ens, k)) for k in EnsembleEstimator.kinds]
    return estimator_comparison(probe, estimators, seed=seed, dataset_id=fingerprint(left),
                                probe_config=probe_cfg)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--data", default="random", choices=["random", "medium", "expert"])
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--model-epochs", type=int, default=20)
    p.add_argument("--policy-steps", type=int, default=5000)
    p.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
    p.add_argument("--out")
    args = p.parse_args()

    records = []
    names = ["sumo", *EnsembleEstimator.kinds]
    print("seed  " + "  ".join(f"{n:>20}" for n in names))
    for seed in args.seeds:
        reports = run(seed, args)
        records += [r.to_record() for r in reports]
        cells = [f"{r.spearman:8.3f} / {r.pearson:7.3f}" if r.spearman is not None else "undefined"
                 for r in reports]
        print(f"{seed:>4}  " + "  ".join(f"{c:>20}" for c in cells), flush=True)
    if args.out:
        with open(args.out, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
