import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sumorl.envs import (PointMass2D, RandomPolicy, behavior_policy, generate_dataset,
                         restrict_region, run_episodes)
from sumorl.errors import DomainError

ENV = PointMass2D()


def test_rest_state_stays_put():
    s = np.array([0.3, -0.2, 0.0, 0.0])
    s2, _, _ = ENV.step(s, np.zeros(2))
    np.testing.assert_array_equal(s2, s)


def test_hand_computed_step():
    s2, r, done = ENV.step(np.zeros(4), np.array([1.0, 0.0]))
    np.testing.assert_allclose(s2, [0.01, 0.0, 0.1, 0.0], atol=1e-15)
    assert not done


def test_goal_reward_and_optional_termination():
    at_goal = np.array([0.8, 0.8, 0.0, 0.0])
    _, r, done = ENV.step(at_goal, np.zeros(2))
    assert r == 1.0 and not done
    _, r, done = PointMass2D(terminate_at_goal=True).step(at_goal, np.zeros(2))
    assert r == 1.0 and done


def test_horizon_sets_done():
    _, _, done = ENV.step(np.zeros(4), np.zeros(2), t=ENV.horizon - 1)
    assert done
    _, _, done = ENV.step(np.zeros(4), np.zeros(2), t=ENV.horizon - 2)
    assert not done


def test_actions_and_state_are_clamped():
    s2, _, _ = ENV.step(np.array([0.99, -0.99, 1.0, -1.0]), np.array([5.0, -5.0]))
    np.testing.assert_allclose(s2, [1.0, -1.0, 1.0, -1.0])


def test_non_finite_input():
    with pytest.raises(DomainError):
        ENV.step(np.array([np.nan, 0, 0, 0]), np.zeros(2))


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_step_is_pure_and_bounded(state, action):
    a = ENV.step(np.array(state), np.array(action))
    b = ENV.step(np.array(state), np.array(action))
    np.testing.assert_array_equal(a[0], b[0])
    assert 0.0 <= a[1] <= 1.0
    assert np.all(np.abs(a[0]) <= 1.0)


def test_batched_step_matches_single(rng):
    s = rng.uniform(-1, 1, size=(20, 4))
    a = rng.uniform(-1, 1, size=(20, 2))
    batch, r, _ = ENV.step(s, a)
    for i in range(20):
        np.testing.assert_array_equal(ENV.step(s[i], a[i])[0], batch[i])


@pytest.mark.parametrize("variant", ["random", "medium", "expert"])
def test_behavior_actions_in_bounds(variant, rng):
    a = behavior_policy(variant)(rng.uniform(-1, 1, size=(1000, 4)), rng)
    assert np.all(np.abs(a) <= 1.0)


def test_expert_beats_random():
    _, expert = generate_dataset("expert", 200, seed=3)
    _, random = generate_dataset("random", 200, seed=3)
    assert expert.mean() > random.mean()


def test_generation_is_seeded():
    a, _ = generate_dataset("medium", 5, seed=1)
    b, _ = generate_dataset("medium", 5, seed=1)
    c, _ = generate_dataset("medium", 5, seed=2)
    assert a == b and not a == c


def test_rewards_in_bounds_and_done_zero():
    ds, _ = generate_dataset("random", 20, seed=0)
    assert len(ds) == 20 * ENV.horizon
    assert np.all((ds.r >= 0) & (ds.r <= 1)) and not ds.done.any()


def test_random_policy_coverage():
    ds, _ = generate_dataset("random", 500, seed=0)
    cells = np.floor((ds.s[:, :2] + 1.0) / 0.2).clip(0, 9).astype(int)
    assert len({tuple(c) for c in cells}) >= 50


def test_terminating_episodes_are_truncated():
    env = PointMass2D(terminate_at_goal=True)
    ds, _ = generate_dataset("expert", 20, seed=0, env=env)
    assert ds.done.sum() > 0
    assert np.all(env.at_goal(ds.s_next[ds.done, :2]))


def test_left_region():
    ds, _ = generate_dataset("random", 20, seed=0)
    left = restrict_region(ds, "left")
    assert 0 < len(left) < len(ds)
    assert np.all(left.s[:, 0] < 0) and np.all(left.s_next[:, 0] < 0)
    assert restrict_region(ds, "all") is ds


def test_run_episodes_returns_match_rewards(rng):
    flat, returns = run_episodes(ENV, RandomPolicy(), 4, rng)
    np.testing.assert_allclose(flat["r"].reshape(4, -1).sum(axis=1), returns)
