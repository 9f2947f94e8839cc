"""OOD probe and correlation statistics.

The probe rolls a policy through the learned model from dataset states,
replays every ``(s, a)`` in the true environment and records the L2 error of
the predicted next state. Estimators are scored by how well their
uncertainty tracks that error (Spearman and Pearson correlation).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, UndefinedCorrelationError

PROBE_POLICIES = ("sac", "random", "medium", "expert")


@dataclass(frozen=True)
class ProbeConfig:
    n_starts: int = 100
    horizon: int = 100
    total_transitions: int = 10_000
    policy: str = "sac"
    policy_steps: int = 50_000

    def __post_init__(self):
        if min(self.n_starts, self.horizon, self.total_transitions) < 1:
            raise ParameterError("probe counts must be at least 1")
        if self.total_transitions > self.n_starts * self.horizon:
            raise ParameterError("total_transitions exceeds n_starts * horizon")
        if self.policy not in PROBE_POLICIES:
            raise ParameterError(f"probe policy must be one of {PROBE_POLICIES}")
        if self.policy_steps < 1:
            raise ParameterError("policy_steps must be at least 1")


@dataclass
class ProbeResult:
    s: np.ndarray
    a: np.ndarray
    s_pred: np.ndarray
    r_pred: np.ndarray
    member: np.ndarray
    s_true: np.ndarray
    error: np.ndarray

    def __len__(self):
        return self.error.shape[0]


def ood_probe(model, policy, env, dataset, config, rng):
    """Roll ``policy`` through ``model`` and measure next-state error against ``env``.

    ``model`` needs ``sample_step(s, a, rng) -> (s_next, r, member)``.
    Trajectories are laid out start-major and the first
    ``config.total_transitions`` transitions are kept.
    """
    if len(dataset) == 0:
        raise ParameterError("dataset is empty")
    starts = dataset.s[rng.choice(len(dataset), size=config.n_starts, replace=False)
                       if config.n_starts <= len(dataset)
                       else rng.integers(len(dataset), size=config.n_starts)]
    state = starts.copy()
    steps = {k: [] for k in ("s", "a", "s_pred", "r_pred", "member", "s_true")}
    for _ in range(config.horizon):
        a = policy(state, rng)
        s_pred, r_pred, member = model.sample_step(state, a, rng)
        s_true, _, _ = env.step(state, a)
        for key, val in zip(steps, (state, a, s_pred, r_pred, member, s_true)):
            steps[key].append(val)
        state = s_pred
    cols = {k: np.stack(v, axis=1) for k, v in steps.items()}
    n = config.n_starts * config.horizon
    cols = {k: v.reshape(n, *v.shape[2:])[: config.total_transitions] for k, v in cols.items()}
    error = np.linalg.norm(cols["s_true"] - cols["s_pred"], axis=1)
    return ProbeResult(error=error, **cols)


class EnvModel:
    """Wraps true dynamics in the model interface (a zero-error oracle)."""

    def __init__(self, env):
        self.env = env

    def sample_step(self, s, a, rng):
        s_next, r, _ = self.env.step(s, a)
        return s_next, r, np.zeros(np.atleast_2d(s).shape[0], dtype=np.int64)


def _check_pair(x, y):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ShapeError("correlation inputs differ in length")
    if x.size < 2:
        raise ParameterError("correlation needs at least two observations")
    return x, y


def average_ranks(x):
    """1-based ranks with ties sharing the mean of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size)
    boundaries = np.flatnonzero(np.diff(xs)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [x.size]])
    for lo, hi in zip(starts, ends):
        ranks[order[lo:hi]] = 0.5 * (lo + 1 + hi)
    return ranks


def pearson(x, y):
    x, y = _check_pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(x, y):
    x, y = _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


@dataclass
class CorrelationReport:
    estimator: str
    spearman: float | None
    pearson: float | None
    n: int
    seed: int | None = None
    dataset_id: str | None = None
    probe: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    error: str | None = None

    def to_record(self):
        return asdict(self)


def estimator_comparison(probe, estimators, seed=None, dataset_id=None, probe_config=None):
    """One :class:`CorrelationReport` per ``(name, estimator)`` pair.

    Each estimator is called as ``est(s, a, s_next, r, member)``. An undefined
    correlation is reported in the record's ``error`` field.
    """
    if len(probe) == 0:
        raise ParameterError("probe result is empty")
    probe_dict = asdict(probe_config) if probe_config is not None else {}
    reports = []
    for name, est in estimators:
        u = np.asarray(est(probe.s, probe.a, probe.s_pred, probe.r_pred, probe.member))
        params = est.config.to_dict() if hasattr(est, "config") and hasattr(est.config, "to_dict") else {}
        try:
            rho, r = spearman(u, probe.error), pearson(u, probe.error)
            err = None
        except UndefinedCorrelationError as exc:
            rho = r = None
            err = str(exc)
        reports.append(CorrelationReport(name, rho, r, len(probe), seed, dataset_id, probe_dict,
                                         params, err))
    return reports


def train_probe_policy(ensemble, dataset, steps, seed=0, agent_config=None, env=None):
    """SAC trained purely inside ``ensemble`` with no uncertainty penalty.

    Returns the stochastic actor, which is what drives the probe rollouts.
    """
    from .agent import SacConfig
    from .estimators import ConstantEstimator
    from .pipelines import PipelineConfig, run_pipeline

    per_epoch = min(1000, steps)
    cfg = PipelineConfig(lam=0.0, epochs=max(1, steps // per_epoch), updates_per_epoch=per_epoch,
                         seed=seed, agent=agent_config or SacConfig(), eval_episodes=1)
    res = run_pipeline(cfg, dataset, env=env, ensemble=ensemble,
                       estimator=ConstantEstimator(0.0))
    return res.agent.policy(deterministic=False)
