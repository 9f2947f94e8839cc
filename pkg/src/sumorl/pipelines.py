"""MOPO+SUMO (reward penalty) and AMOReL+SUMO (trajectory truncation).

Both loops share the same skeleton: fit the dynamics ensemble, build the
uncertainty estimator, then alternate between model rollouts from dataset
states and SAC updates on batches mixing offline and synthetic data.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .agent import SacAgent, SacConfig
from .dynamics import EnsembleConfig, train_ensemble
from .envs import PointMass2D, evaluate_policy
from .errors import ConfigError, ParameterError
from .estimators import (ConstantEstimator, EnsembleEstimator, RunningMax, SumoConfig,
                         SumoEstimator, normalize_penalties)

log = logging.getLogger(__name__)


class Variant(str, Enum):
    MOPO = "mopo"
    AMOREL = "amorel"


@dataclass(frozen=True)
class PipelineConfig:
    variant: Variant = Variant.MOPO
    horizon: int = 5
    lam: float = 1.0
    alpha: float = 5.0
    eta: float = 0.9
    epochs: int = 50
    rollouts_per_epoch: int = 200
    updates_per_epoch: int = 1000
    batch_size: int = 256
    buffer_capacity: int = 100_000
    penalty_scope: str = "batch"
    estimator: str = "sumo"
    eval_episodes: int = 10
    seed: int = 0
    sumo: SumoConfig = field(default_factory=SumoConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    agent: SacConfig = field(default_factory=SacConfig)

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must lie in [0, 1]")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.penalty_scope not in ("batch", "global"):
            raise ConfigError("penalty_scope must be 'batch' or 'global'")
        if self.batch_size < 1 or self.epochs < 0 or self.rollouts_per_epoch < 1:
            raise ConfigError("batch_size and rollouts_per_epoch must be positive, epochs >= 0")

    def to_dict(self):
        d = asdict(self)
        d["variant"] = self.variant.value
        d["sumo"] = self.sumo.to_dict()
        d["ensemble"] = self.ensemble.to_dict()
        d["agent"] = self.agent.to_dict()
        return d


class SyntheticBuffer:
    """FIFO ring buffer of model transitions with their uncertainty scores."""

    def __init__(self, state_dim, action_dim, capacity=100_000):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, state_dim))
        self.a = np.zeros((self.capacity, action_dim))
        self.r = np.zeros(self.capacity)
        self.s_next = np.zeros((self.capacity, state_dim))
        self.done = np.zeros(self.capacity)
        self.u = np.zeros(self.capacity)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, u, done=None):
        n = len(r)
        if n == 0:
            return
        if n > self.capacity:
            s, a, r, s_next, u = s[-self.capacity:], a[-self.capacity:], r[-self.capacity:], \
                s_next[-self.capacity:], u[-self.capacity:]
            done = None if done is None else done[-self.capacity:]
            n = self.capacity
        idx = (self._next + np.arange(n)) % self.capacity
        self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.u[idx] = s, a, r, s_next, u
        self.done[idx] = 0.0 if done is None else done
        self._next = int((self._next + n) % self.capacity)
        self.size = min(self.capacity, self.size + n)

    def contents(self):
        sl = slice(0, self.size)
        return {"s": self.s[sl], "a": self.a[sl], "r": self.r[sl], "s_next": self.s_next[sl],
                "done": self.done[sl], "u": self.u[sl]}


@dataclass
class RolloutBatch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    raw_r: np.ndarray
    s_next: np.ndarray
    u: np.ndarray
    penalty: np.ndarray
    member: np.ndarray
    lengths: np.ndarray
    truncated: np.ndarray

    def __len__(self):
        return self.r.shape[0]


def _rollout_steps(ensemble, policy, estimator, start_states, horizon, rng, threshold=None):
    """Step every start state through the model; with ``threshold`` a row stops at its first u >= threshold."""
    n = start_states.shape[0]
    state = np.array(start_states, dtype=np.float64)
    alive = np.ones(n, dtype=bool)
    lengths = np.zeros(n, dtype=np.int64)
    truncated = np.zeros(n, dtype=bool)
    cols = {k: [] for k in ("s", "a", "r", "s_next", "u", "member")}
    for _ in range(horizon):
        rows = np.flatnonzero(alive)
        if rows.size == 0:
            break
        s = state[rows]
        a = policy(s, rng)
        s_next, r, member = ensemble.sample_step(s, a, rng)
        u = np.asarray(estimator(s, a, s_next, r, member), dtype=np.float64)
        if threshold is not None:
            keep = u < threshold
            truncated[rows[~keep]] = True
            alive[rows[~keep]] = False
            s, a, r, s_next, u, member = s[keep], a[keep], r[keep], s_next[keep], u[keep], member[keep]
            rows = rows[keep]
        lengths[rows] += 1
        state[rows] = s_next
        for key, val in zip(cols, (s, a, r, s_next, u, member)):
            cols[key].append(val)
    d_s, d_a = start_states.shape[1], ensemble.d_a
    out = {k: (np.concatenate(v) if v else None) for k, v in cols.items()}
    if out["s"] is None:
        out = {"s": np.zeros((0, d_s)), "a": np.zeros((0, d_a)), "r": np.zeros(0),
               "s_next": np.zeros((0, d_s)), "u": np.zeros(0), "member": np.zeros(0, dtype=np.int64)}
    return out, lengths, truncated


def mopo_rollout(ensemble, policy, estimator, start_states, config, rng, penalty_scale=None):
    """Model rollouts with reward ``r - lam * u_hat``; ``u_hat`` normalised over this batch."""
    out, lengths, truncated = _rollout_steps(ensemble, policy, estimator, start_states,
                                             config.horizon, rng)
    penalty = normalize_penalties(out["u"], ensemble.r_max, scale=penalty_scale)
    r = out["r"] - config.lam * penalty
    return RolloutBatch(out["s"], out["a"], r, out["r"], out["s_next"], out["u"], penalty,
                        out["member"], lengths, truncated)


def amorel_rollout(ensemble, policy, estimator, start_states, threshold, config, rng):
    """Model rollouts that stop at the first transition with ``u >= threshold``."""
    out, lengths, truncated = _rollout_steps(ensemble, policy, estimator, start_states,
                                             config.horizon, rng, threshold=threshold)
    return RolloutBatch(out["s"], out["a"], out["r"], out["r"], out["s_next"], out["u"],
                        np.zeros_like(out["u"]), out["member"], lengths, truncated)


def split_batch_size(eta, batch_size):
    """Number of offline samples in a batch: ``floor(eta * B)``."""
    if batch_size < 1:
        raise ParameterError("batch size must be at least 1")
    return int(math.floor(round(eta * batch_size, 9)))


def mixed_batch(dataset, buffer, eta, batch_size, rng):
    """Batch with ``floor(eta*B)`` offline rows and the rest from the synthetic buffer."""
    n_off = split_batch_size(eta, batch_size)
    if buffer is None or len(buffer) == 0:
        n_off = batch_size
    n_syn = batch_size - n_off
    off = rng.integers(len(dataset), size=n_off)
    syn = rng.integers(len(buffer), size=n_syn) if n_syn else np.zeros(0, dtype=np.int64)
    parts = {
        "s": [dataset.s[off]], "a": [dataset.a[off]], "r": [dataset.r[off]],
        "s_next": [dataset.s_next[off]], "done": [dataset.done[off].astype(np.float64)],
        "u": [np.full(n_off, np.nan)],
    }
    if n_syn:
        for key in parts:
            parts[key].append(getattr(buffer, key)[syn])
    batch = {k: np.concatenate(v) for k, v in parts.items()}
    batch["n_offline"] = n_off
    return batch


def make_estimator(name, dataset, ensemble, sumo_config, value=None):
    if name == "sumo":
        return SumoEstimator(dataset, sumo_config)
    if name in EnsembleEstimator.kinds:
        return EnsembleEstimator(ensemble, name)
    if name == "constant":
        return ConstantEstimator(0.0 if value is None else value)
    raise ConfigError(f"unknown estimator {name!r}")


@dataclass
class RunResult:
    agent: SacAgent
    log: list
    buffer: SyntheticBuffer
    threshold: float | None
    ensemble: object
    audit: dict


def run_pipeline(config, dataset, env=None, ensemble=None, estimator=None, log_fh=None,
                 stop_when=None):
    """Train a policy with MOPO+SUMO or AMOReL+SUMO and return the agent plus per-epoch records.

    ``stop_when(record)`` is called after every epoch record; a true result ends
    the run early.
    """
    env = env or PointMass2D()
    root = np.random.SeedSequence(config.seed)
    ens_seq, agent_seq, roll_seq, batch_seq, upd_seq, eval_seq = root.spawn(6)
    if ensemble is None:
        ensemble = train_ensemble(dataset, config.ensemble, seed=int(ens_seq.generate_state(1)[0]),
                                  r_max=env.r_max)
    if estimator is None:
        estimator = make_estimator(config.estimator, dataset, ensemble, config.sumo)
    threshold = None
    if config.variant is Variant.AMOREL:
        threshold = estimator.threshold(dataset, config.alpha)

    agent = SacAgent(dataset.d_s, dataset.d_a, config.agent,
                     seed=int(agent_seq.generate_state(1)[0]))
    buffer = SyntheticBuffer(dataset.d_s, dataset.d_a, config.buffer_capacity)
    roll_rng = np.random.default_rng(roll_seq)
    batch_rng = np.random.default_rng(batch_seq)
    upd_rng = np.random.default_rng(upd_seq)
    eval_rng = np.random.default_rng(eval_seq)
    running = RunningMax()
    records = []
    audit = {"max_u_used": -math.inf, "violations": 0, "synthetic_used": 0,
             "min_reward_used": math.inf, "max_reward_used": -math.inf}

    def emit(record):
        records.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()

    emit({"type": "header", "config": config.to_dict(), "seed": config.seed,
          "threshold": threshold, "dataset_size": len(dataset),
          "ensemble_holdout_nll": ensemble.train_log.get("holdout_nll_final")})

    for epoch in range(config.epochs):
        starts = dataset.s[roll_rng.integers(len(dataset), size=config.rollouts_per_epoch)]
        policy = agent.policy(deterministic=False)
        if config.variant is Variant.MOPO:
            batch = mopo_rollout(ensemble, policy, estimator, starts, config, roll_rng)
            if config.penalty_scope == "global":
                batch.penalty = normalize_penalties(batch.u, ensemble.r_max,
                                                    scale=running.update(batch.u))
                batch.r = batch.raw_r - config.lam * batch.penalty
        else:
            batch = amorel_rollout(ensemble, policy, estimator, starts, threshold, config, roll_rng)
        buffer.add(batch.s, batch.a, batch.r, batch.s_next, batch.u)

        losses = []
        for _ in range(config.updates_per_epoch):
            mb = mixed_batch(dataset, buffer, config.eta, config.batch_size, batch_rng)
            syn_u = mb["u"][mb["n_offline"]:]
            syn_r = mb["r"][mb["n_offline"]:]
            if syn_u.size:
                audit["synthetic_used"] += int(syn_u.size)
                audit["max_u_used"] = max(audit["max_u_used"], float(np.max(syn_u)))
                audit["min_reward_used"] = min(audit["min_reward_used"], float(np.min(syn_r)))
                audit["max_reward_used"] = max(audit["max_reward_used"], float(np.max(syn_r)))
                if threshold is not None:
                    audit["violations"] += int(np.sum(syn_u >= threshold))
            losses.append(agent.update(mb, upd_rng))

        returns = evaluate_policy(env, agent.policy(deterministic=True), config.eval_episodes,
                                  eval_rng)
        record = {
            "type": "epoch", "epoch": epoch + 1, "gradient_steps": agent.updates,
            "eval_return_mean": float(np.mean(returns)), "eval_return_std": float(np.std(returns)),
            "mean_u": float(np.mean(batch.u)) if len(batch) else None,
            "max_u": float(np.max(batch.u)) if len(batch) else None,
            "rollout_transitions": len(batch),
            "mean_rollout_length": float(np.mean(batch.lengths)),
            "truncation_rate": float(np.mean(batch.truncated)),
            "mean_penalty": float(np.mean(batch.penalty)) if len(batch) else None,
            "buffer_size": len(buffer),
        }
        if losses:
            for key in losses[0]:
                record[f"loss_{key}"] = float(np.mean([l[key] for l in losses]))
        emit(record)
        log.info("epoch %d return %.2f", epoch + 1, record["eval_return_mean"])
        if stop_when is not None and stop_when(record):
            break

    return RunResult(agent, records, buffer, threshold, ensemble, audit)
