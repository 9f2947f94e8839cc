"""Online SAC on PointMass2D, a sanity check for the agent alone.

The agent interacts with the true environment, learns from a uniform replay
buffer and is evaluated every ``--eval-every`` steps. A seed counts as a
success once its deterministic return reaches ``--fraction`` of the expert's.

    python scripts/online_sac.py --seeds 0 1 2 3 4
"""

import argparse

import numpy as np

from sumorl.agent import SacAgent, SacConfig
from sumorl.envs import PointMass2D, evaluate_policy, generate_dataset
from sumorl.pipelines import SyntheticBuffer


def train(seed, args, target):
    env = PointMass2D()
    agent = SacAgent(env.state_dim, env.action_dim, SacConfig(hidden=tuple(args.hidden)), seed=seed)
    rng = np.random.default_rng(seed)
    buf = SyntheticBuffer(env.state_dim, env.action_dim, capacity=args.steps)
    state, t = env.reset(rng), 0
    for step in range(1, args.steps + 1):
        if step <= args.warmup:
            action = rng.uniform(-1, 1, size=env.action_dim)
        else:
            action = agent.actor.sample(state[None], rng)[0]
        next_state, reward, done = env.step(state, action, t=t)
        # Time-limit endings are not terminal, so nothing is masked.
        buf.add(state[None], action[None], np.array([reward]), next_state[None], np.zeros(1))
        state, t = (env.reset(rng), 0) if done else (next_state, t + 1)
        if step > args.warmup:
            idx = rng.integers(len(buf), size=args.batch_size)
            c = buf.contents()
            batch = {k: c[k][idx] for k in ("s", "a", "r", "s_next", "done")}
            agent.update(batch, rng)
        if step % args.eval_every == 0:
            ret = float(np.mean(evaluate_policy(env, agent.policy(), 10, rng)))
            print(f"  seed {seed} step {step:>6} return {ret:.1f}", flush=True)
            if ret >= target:
                return True, step, ret
    return False, args.steps, ret


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--eval-every", type=int, default=2000)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--hidden", type=int, nargs="+", default=[256, 256])
    args = p.parse_args()

    _, expert = generate_dataset("expert", 200, seed=0)
    target = args.fraction * float(np.mean(expert))
    print(f"expert return {np.mean(expert):.1f}, target {target:.1f}")
    hits = 0
    for seed in args.seeds:
        ok, step, ret = train(seed, args, target)
        hits += ok
        print(f"seed {seed}: {'reached' if ok else 'missed'} target at step {step} ({ret:.1f})")
    print(f"{hits}/{len(args.seeds)} seeds reached the target")


if __name__ == "__main__":
    main()
