"""Sweep one SUMO setting (k, search-vector mode or metric) on a shared probe.

The probe and model are built once per seed; every value of the swept
setting is scored against the same true errors.

    python scripts/ablation.py --sweep mode --values sas sa ss
"""

import argparse

import numpy as np

from sumorl.agent import SacConfig
from sumorl.dynamics import EnsembleConfig, train_ensemble
from sumorl.envs import PointMass2D, generate_dataset, restrict_region
from sumorl.estimators import SumoConfig, SumoEstimator
from sumorl.eval import ProbeConfig, ood_probe, spearman, train_probe_policy
from sumorl.knn import Metric, SearchVectorMode

CASTS = {"k": int, "mode": SearchVectorMode, "metric": Metric}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sweep", choices=list(CASTS), default="k")
    p.add_argument("--values", nargs="+", default=["1", "5", "10"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--policy-steps", type=int, default=5000)
    args = p.parse_args()
    values = [CASTS[args.sweep](v) for v in args.values]

    table = {v: [] for v in values}
    for seed in args.seeds:
        ds, _ = generate_dataset("random", 200, seed=seed)
        left = restrict_region(ds, "left")
        ens = train_ensemble(left, EnsembleConfig(epochs=20), seed=seed)
        policy = train_probe_policy(ens, left, args.policy_steps, seed=seed,
                                    agent_config=SacConfig(hidden=(64, 64)))
        probe = ood_probe(ens, policy, PointMass2D(), left, ProbeConfig(),
                          np.random.default_rng(seed + 1000))
        for v in values:
            est = SumoEstimator(left, SumoConfig(**{args.sweep: v}))
            table[v].append(spearman(est(probe.s, probe.a, probe.s_pred), probe.error))

    for v, rhos in table.items():
        label = v.value if hasattr(v, "value") else v
        print(f"{args.sweep}={label:<10} spearman mean {np.mean(rhos):.3f}  "
              f"per seed {[round(r, 3) for r in rhos]}")


if __name__ == "__main__":
    main()
