"""PointMass2D: a deterministic double integrator with a dense goal reward.

The true dynamics are a pure function of ``(state, action)``, which is what
lets the OOD probe replay model transitions exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import OfflineDataset
from .errors import DomainError


@dataclass(frozen=True)
class PointMass2D:
    dt: float = 0.1
    goal: tuple = (0.8, 0.8)
    goal_radius: float = 0.05
    horizon: int = 100
    arena: float = 1.0
    max_speed: float = 1.0
    noise_std: float = 0.0
    terminate_at_goal: bool = False

    state_dim = 4
    action_dim = 2
    r_max = 1.0

    def reward(self, pos):
        dist = np.linalg.norm(np.asarray(pos) - np.asarray(self.goal), axis=-1)
        return 1.0 - np.minimum(dist / (2.0 * math.sqrt(2.0)), 1.0)

    def at_goal(self, pos):
        return np.linalg.norm(np.asarray(pos) - np.asarray(self.goal), axis=-1) <= self.goal_radius

    def reset(self, rng, n=None):
        """Uniform position in the arena, zero velocity."""
        shape = (2,) if n is None else (n, 2)
        pos = rng.uniform(-self.arena, self.arena, size=shape)
        return np.concatenate([pos, np.zeros(shape)], axis=-1)

    def step(self, state, action, t=None, rng=None):
        """Advance one step; works on single states or batches ``(B, 4)``.

        Returns ``(next_state, reward, done)``. ``done`` is set when ``t``
        (the index of this step within the episode) reaches the horizon, and
        on arrival at the goal if ``terminate_at_goal`` is on.
        """
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(action))):
            raise DomainError("state and action must be finite")
        action = np.clip(action, -1.0, 1.0)
        pos, vel = state[..., :2], state[..., 2:]
        vel = np.clip(vel + action * self.dt, -self.max_speed, self.max_speed)
        pos = pos + vel * self.dt
        if self.noise_std > 0.0:
            if rng is None:
                raise ValueError("a noisy environment needs an rng")
            pos = pos + rng.normal(scale=self.noise_std, size=pos.shape)
        pos = np.clip(pos, -self.arena, self.arena)
        next_state = np.concatenate([pos, vel], axis=-1)
        reward = self.reward(pos)
        done = np.full(reward.shape, t is not None and t + 1 >= self.horizon)
        if self.terminate_at_goal:
            done = done | self.at_goal(pos)
        if done.ndim == 0:
            done = bool(done)
        return next_state, reward, done


class RandomPolicy:
    name = "random"

    def __call__(self, states, rng):
        states = np.atleast_2d(states)
        return rng.uniform(-1.0, 1.0, size=(states.shape[0], 2))


class GoalController:
    """PD controller toward the goal with additive Gaussian action noise."""

    def __init__(self, goal=(0.8, 0.8), noise_std=0.0, kp=4.0, kd=4.0, name="controller"):
        self.goal = np.asarray(goal, dtype=np.float64)
        self.noise_std = noise_std
        self.kp, self.kd = kp, kd
        self.name = name

    def __call__(self, states, rng):
        states = np.atleast_2d(states)
        a = self.kp * (self.goal - states[:, :2]) - self.kd * states[:, 2:]
        if self.noise_std > 0.0:
            a = a + rng.normal(scale=self.noise_std, size=a.shape)
        return np.clip(a, -1.0, 1.0)


def behavior_policy(variant, env=None):
    goal = (env or PointMass2D()).goal
    if variant == "random":
        return RandomPolicy()
    if variant == "medium":
        return GoalController(goal, noise_std=0.3, name="medium")
    if variant == "expert":
        return GoalController(goal, noise_std=0.05, name="expert")
    raise ValueError(f"unknown policy variant {variant!r}")


def run_episodes(env, policy, episodes, rng):
    """Roll ``episodes`` full-horizon episodes in parallel.

    Returns the flat transition arrays in episode-major order and the
    per-episode returns.
    """
    state = env.reset(rng, episodes)
    cols = {"s": [], "a": [], "r": [], "s_next": [], "done": [], "alive": []}
    returns = np.zeros(episodes)
    alive = np.ones(episodes, dtype=bool)
    for t in range(env.horizon):
        action = policy(state, rng)
        next_state, reward, done = env.step(state, action, t=t, rng=rng)
        for key, val in zip(cols, (state, action, reward, next_state, done, alive.copy())):
            cols[key].append(val)
        returns += np.where(alive, reward, 0.0)
        alive &= ~done
        state = next_state
    out = {k: np.stack(v, axis=1) for k, v in cols.items()}
    keep = out.pop("alive").reshape(-1)
    flat = {k: v.reshape(episodes * env.horizon, *v.shape[2:])[keep] for k, v in out.items()}
    return flat, returns


def evaluate_policy(env, policy, episodes, rng):
    _, returns = run_episodes(env, policy, episodes, rng)
    return returns


def generate_dataset(variant, episodes, seed, env=None):
    """Offline dataset from seeded rollouts of a behaviour policy.

    Time-limit endings are not terminal, so ``done`` is 0 unless the
    environment terminates at the goal.
    """
    env = env or PointMass2D()
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    rng = np.random.default_rng(seed)
    flat, returns = run_episodes(env, behavior_policy(variant, env), episodes, rng)
    reward = np.clip(flat["r"], 0.0, env.r_max)
    terminal = flat["done"] & env.at_goal(flat["s_next"][:, :2]) if env.terminate_at_goal \
        else np.zeros(reward.shape, dtype=bool)
    dataset = OfflineDataset(flat["s"], flat["a"], reward, flat["s_next"], terminal)
    return dataset, returns


def restrict_region(dataset, region):
    """Keep transitions whose start and end lie in ``region`` ("all" or "left": x < 0)."""
    if region == "all":
        return dataset
    if region == "left":
        return dataset.subset((dataset.s[:, 0] < 0.0) & (dataset.s_next[:, 0] < 0.0))
    raise ValueError(f"unknown region {region!r}")
