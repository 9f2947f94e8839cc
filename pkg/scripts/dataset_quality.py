"""MOPO+SUMO and AMOReL+SUMO across random / medium / expert PointMass2D data.

Reports the behaviour return of each dataset next to the final deterministic
return of both pipelines.

    python scripts/dataset_quality.py --seeds 0 1 --epochs 10
"""

import argparse

import numpy as np

from sumorl.envs import generate_dataset
from sumorl.pipelines import PipelineConfig, run_pipeline


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--variants", nargs="+", default=["mopo", "amorel"])
    args = p.parse_args()

    for quality in ("random", "medium", "expert"):
        for seed in args.seeds:
            ds, behaviour = generate_dataset(quality, 200, seed=seed)
            row = [f"{quality:<7} seed {seed}  behaviour {np.mean(behaviour):6.1f}"]
            ensemble = None
            for variant in args.variants:
                res = run_pipeline(PipelineConfig(variant=variant, seed=seed, epochs=args.epochs),
                                   ds, ensemble=ensemble)
                ensemble = res.ensemble
                row.append(f"{variant} {res.log[-1]['eval_return_mean']:6.1f}")
            print("  ".join(row), flush=True)


if __name__ == "__main__":
    main()
