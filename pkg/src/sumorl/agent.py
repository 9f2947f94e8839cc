"""Soft actor-critic on top of :mod:`sumorl.nn`.

Actions are squashed with ``tanh`` into ``[-1, 1]``. Gradients of the actor
loss flow through the critics into the action by the reparameterisation
trick, all by hand.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .archive import save_npz
from .errors import NumericError, ParameterError
from .nn import LOG_2PI, Adam, Mlp

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
FORMAT_TAG = "sumorl-policy v1"


@dataclass(frozen=True)
class SacConfig:
    hidden: tuple = (256, 256)
    activation: str = "relu"
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 0.2
    auto_alpha: bool = False
    target_entropy: float | None = None

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def _log_std(raw):
    t = np.tanh(raw)
    half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN)
    return LOG_STD_MIN + half * (t + 1.0), half * (1.0 - t * t)


def squashed_sample(mean, log_std, eps):
    """``tanh(mean + exp(log_std) * eps)`` and its log-density."""
    std = np.exp(log_std)
    u = mean + std * eps
    action = np.tanh(u)
    # log(1 - tanh(u)^2) in a form that is stable for large |u|
    log_jac = 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    log_prob = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI - log_jac, axis=-1)
    return action, log_prob, u


class Actor:
    def __init__(self, state_dim, action_dim, hidden=(256, 256), activation="relu", rng=None,
                 params=None):
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        self.net = Mlp([self.state_dim, *hidden, 2 * self.action_dim], activation, rng=rng,
                       params=params)

    @property
    def params(self):
        return self.net.params

    def copy(self):
        return Actor(self.state_dim, self.action_dim, self.net.sizes[1:-1],
                     self.net.activation.name, params=[p.copy() for p in self.params])

    def dist_params(self, states, keep_cache=False):
        out = self.net.forward(np.atleast_2d(states), keep_cache=keep_cache)
        out, cache = out if keep_cache else (out, None)
        mean = out[:, : self.action_dim]
        log_std, dlog_std = _log_std(out[:, self.action_dim:])
        return mean, log_std, dlog_std, cache

    def sample(self, states, rng, deterministic=False):
        mean, log_std, _, _ = self.dist_params(states)
        if deterministic:
            return np.tanh(mean)
        eps = rng.standard_normal(mean.shape)
        return squashed_sample(mean, log_std, eps)[0]

    def __call__(self, states, rng=None, deterministic=False):
        return self.sample(states, rng, deterministic)


def act(actor, s, deterministic, rng):
    """Single-state convenience wrapper around :meth:`Actor.sample`."""
    return actor.sample(np.asarray(s)[None, :], rng, deterministic)[0]


class DeterministicPolicy:
    """View of an actor that always returns the squashed mean."""

    def __init__(self, actor):
        self.actor = actor

    def __call__(self, states, rng=None):
        return self.actor.sample(states, rng, deterministic=True)


def _soft_update(target, source, tau):
    for t, s in zip(target.params, source.params):
        t *= 1.0 - tau
        t += tau * s


class SacAgent:
    def __init__(self, state_dim, action_dim, config=None, seed=0):
        self.config = config = config or SacConfig()
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        a_seq, q1_seq, q2_seq = np.random.SeedSequence(seed).spawn(3)
        self.actor = Actor(state_dim, action_dim, config.hidden, config.activation,
                           rng=np.random.default_rng(a_seq))
        sizes = [state_dim + action_dim, *config.hidden, 1]
        self.critics = [Mlp(sizes, config.activation, rng=np.random.default_rng(q1_seq)),
                        Mlp(sizes, config.activation, rng=np.random.default_rng(q2_seq))]
        self.targets = [c.copy() for c in self.critics]
        self.actor_opt = Adam(lr=config.actor_lr)
        self.critic_opts = [Adam(lr=config.critic_lr), Adam(lr=config.critic_lr)]
        self.log_alpha = math.log(config.alpha)
        self.alpha_opt = Adam(lr=config.alpha_lr)
        self.target_entropy = (-float(action_dim) if config.target_entropy is None
                               else config.target_entropy)
        self.updates = 0

    @property
    def alpha(self):
        return math.exp(self.log_alpha)

    def policy(self, deterministic=True):
        return DeterministicPolicy(self.actor) if deterministic else self.actor

    def q_values(self, nets, states, actions):
        x = np.concatenate([states, actions], axis=1)
        return [net.forward(x)[:, 0] for net in nets]

    def critic_target(self, batch, rng):
        s2 = batch["s_next"]
        mean, log_std, _, _ = self.actor.dist_params(s2)
        a2, logp2, _ = squashed_sample(mean, log_std, rng.standard_normal(mean.shape))
        q1, q2 = self.q_values(self.targets, s2, a2)
        soft_v = np.minimum(q1, q2) - self.alpha * logp2
        return batch["r"] + self.config.gamma * (1.0 - batch["done"]) * soft_v

    def actor_loss_and_grads(self, states, eps):
        """Actor loss ``mean(alpha * logp - min Q)`` and its parameter gradients for fixed noise."""
        n = states.shape[0]
        mean, log_std, dlog_std, cache = self.actor.dist_params(states, keep_cache=True)
        action, logp, u = squashed_sample(mean, log_std, eps)
        x = np.concatenate([states, action], axis=1)
        outs = [c.forward(x, keep_cache=True) for c in self.critics]
        q = np.stack([o[0][:, 0] for o in outs])
        pick = np.argmin(q, axis=0)
        q_min = q[pick, np.arange(n)]
        dq_da = np.zeros((n, self.action_dim))
        for i, (critic, (_, c_cache)) in enumerate(zip(self.critics, outs)):
            rows = (pick == i).astype(np.float64)[:, None]
            _, g_in = critic.backward(c_cache, rows)
            dq_da += g_in[:, self.state_dim:]
        alpha = self.alpha
        g_u = (alpha * 2.0 * action - dq_da * (1.0 - action * action)) / n
        g_mean = g_u
        g_log_std = (-alpha / n + g_u * np.exp(log_std) * eps) * dlog_std
        grads, _ = self.actor.net.backward(cache, np.concatenate([g_mean, g_log_std], axis=1))
        loss = float(np.mean(alpha * logp - q_min))
        return loss, grads, logp

    def update(self, batch, rng):
        """One gradient step on critics, actor and (optionally) temperature."""
        s, a = batch["s"], batch["a"]
        n = s.shape[0]
        if n == 0:
            raise ParameterError("empty batch")
        y = self.critic_target(batch, rng)
        x = np.concatenate([s, a], axis=1)
        critic_loss = 0.0
        for critic, opt in zip(self.critics, self.critic_opts):
            q, cache = critic.forward(x, keep_cache=True)
            err = q[:, 0] - y
            critic_loss += 0.5 * float(np.mean(err * err))
            grads, _ = critic.backward(cache, err[:, None] / n)
            opt.step(critic.params, grads)

        eps = rng.standard_normal((n, self.action_dim))
        actor_loss, grads, logp = self.actor_loss_and_grads(s, eps)
        self.actor_opt.step(self.actor.params, grads)

        alpha_loss = 0.0
        if self.config.auto_alpha:
            gap = float(np.mean(logp + self.target_entropy))
            alpha_loss = -self.log_alpha * gap
            box = [np.array([self.log_alpha])]
            self.alpha_opt.step(box, [np.array([-gap])])
            self.log_alpha = float(box[0][0])

        for t, c in zip(self.targets, self.critics):
            _soft_update(t, c, self.config.tau)
        self.updates += 1
        losses = {"critic": critic_loss, "actor": actor_loss, "alpha": alpha_loss,
                  "entropy": float(-np.mean(logp))}
        for name, value in losses.items():
            if not math.isfinite(value):
                raise NumericError(f"non-finite {name} loss at update {self.updates}")
        return losses

    def save(self, path):
        meta = {"format": FORMAT_TAG, "state_dim": self.state_dim,
                "action_dim": self.action_dim, "config": self.config.to_dict()}
        arrays = {f"p{j}": p for j, p in enumerate(self.actor.params)}
        save_npz(path, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_actor(path):
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported policy format {meta.get('format')!r}")
        cfg = meta["config"]
        n = 2 * (len(cfg["hidden"]) + 1)
        params = [z[f"p{j}"] for j in range(n)]
    return Actor(meta["state_dim"], meta["action_dim"], tuple(cfg["hidden"]), cfg["activation"],
                 params=params)
