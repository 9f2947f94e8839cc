"""Probabilistic ensemble dynamics model over ``(s', r)``.

Each member is a :class:`MlpGaussianHead` fed standardised ``s ⊕ a`` and
predicting standardised ``(s' - s, r)``; predictions are mapped back to raw
units before they leave this module.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyDatasetError, ShapeError
from .estimators import EnsemblePrediction
from .archive import save_npz
from .nn import Adam, MlpGaussianHead, gaussian_nll

log = logging.getLogger(__name__)

FORMAT_TAG = "sumorl-ensemble v1"


@dataclass(frozen=True)
class EnsembleConfig:
    n_members: int = 7
    hidden: tuple = (200, 200)
    activation: str = "silu"
    logvar_bounds: tuple = (-10.0, 2.0)
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 256
    holdout_fraction: float = 0.1
    max_holdout: int = 1000

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["logvar_bounds"] = list(self.logvar_bounds)
        return d


def _safe_std(x):
    std = x.std(axis=0)
    return np.where(std > 0.0, std, 1.0)


class GaussianEnsemble:
    def __init__(self, members, d_s, d_a, in_shift, in_scale, out_shift, out_scale,
                 r_max=1.0, config=None):
        self.members = list(members)
        self.d_s, self.d_a = int(d_s), int(d_a)
        self.in_shift, self.in_scale = np.asarray(in_shift), np.asarray(in_scale)
        self.out_shift, self.out_scale = np.asarray(out_shift), np.asarray(out_scale)
        self.r_max = float(r_max)
        self.config = config or EnsembleConfig(n_members=len(self.members))
        self.train_log = {}

    @classmethod
    def initialize(cls, dataset, config=None, seed=0, r_max=1.0):
        """Untrained ensemble with normalisers fitted on ``dataset``."""
        config = config or EnsembleConfig()
        if len(dataset) == 0:
            raise EmptyDatasetError("cannot fit an ensemble to an empty dataset")
        x = np.concatenate([dataset.s, dataset.a], axis=1)
        y = np.concatenate([dataset.s_next - dataset.s, dataset.r[:, None]], axis=1)
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        seeds = root.spawn(config.n_members)
        members = [
            MlpGaussianHead(x.shape[1], y.shape[1], config.hidden, config.activation,
                            config.logvar_bounds, rng=np.random.default_rng(sq))
            for sq in seeds
        ]
        return cls(members, dataset.d_s, dataset.d_a, x.mean(axis=0), _safe_std(x),
                   y.mean(axis=0), _safe_std(y), r_max, config)

    @property
    def n_members(self):
        return len(self.members)

    def _inputs(self, s, a):
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        if s.shape[1] != self.d_s or a.shape[1] != self.d_a or s.shape[0] != a.shape[0]:
            raise ShapeError(f"expected s (B,{self.d_s}) and a (B,{self.d_a}), got {s.shape}, {a.shape}")
        return s, (np.concatenate([s, a], axis=1) - self.in_shift) / self.in_scale

    def _targets(self, dataset):
        y = np.concatenate([dataset.s_next - dataset.s, dataset.r[:, None]], axis=1)
        return (y - self.out_shift) / self.out_scale

    def _to_raw(self, s, mu, logvar):
        mean = mu * self.out_scale + self.out_shift
        mean[:, : self.d_s] += s
        var = np.exp(logvar) * self.out_scale ** 2
        return mean, var

    def member_forward(self, i, s, a):
        """Raw-unit ``(mean, var)`` of one member over ``[s', r]``."""
        s, x = self._inputs(s, a)
        mu, logvar = self.members[i].forward(x)
        return self._to_raw(s, mu, logvar)

    def predict_all(self, s, a):
        s, x = self._inputs(s, a)
        means, variances = [], []
        for m in self.members:
            mu, logvar = m.forward(x)
            mean, var = self._to_raw(s, mu, logvar)
            means.append(mean)
            variances.append(var)
        return EnsemblePrediction(np.stack(means), np.stack(variances))

    def sample_step(self, s, a, rng):
        """Draw ``(s_next, r, member)`` for each row using a uniformly chosen member."""
        s, x = self._inputs(s, a)
        n = s.shape[0]
        member = rng.integers(self.n_members, size=n)
        noise = rng.standard_normal((n, self.d_s + 1))
        mean = np.empty((n, self.d_s + 1))
        var = np.empty((n, self.d_s + 1))
        for i in np.unique(member):
            rows = member == i
            mu, logvar = self.members[i].forward(x[rows])
            mean[rows], var[rows] = self._to_raw(s[rows], mu, logvar)
        out = sample_gaussian(mean, var, noise)
        r = np.clip(out[:, self.d_s], 0.0, self.r_max)
        return out[:, : self.d_s], r, member

    def holdout_nll(self, dataset):
        """Mean per-sample NLL (standardised target space) of each member."""
        _, x = self._inputs(dataset.s, dataset.a)
        y = self._targets(dataset)
        return [float(np.mean(gaussian_nll(*m.forward(x), y))) for m in self.members]

    def params_equal(self, other):
        return all(
            np.array_equal(p, q)
            for m1, m2 in zip(self.members, other.members)
            for p, q in zip(m1.params, m2.params)
        )

    def save(self, path):
        meta = {
            "format": FORMAT_TAG, "d_s": self.d_s, "d_a": self.d_a, "r_max": self.r_max,
            "config": self.config.to_dict(), "train_log": self.train_log,
        }
        arrays = {"in_shift": self.in_shift, "in_scale": self.in_scale,
                  "out_shift": self.out_shift, "out_scale": self.out_scale}
        for i, m in enumerate(self.members):
            for j, p in enumerate(m.params):
                arrays[f"m{i}_p{j}"] = p
        save_npz(path, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != FORMAT_TAG:
                raise ValueError(f"unsupported ensemble format {meta.get('format')!r}")
            cfg = meta["config"]
            config = EnsembleConfig(**{**cfg, "hidden": tuple(cfg["hidden"]),
                                       "logvar_bounds": tuple(cfg["logvar_bounds"])})
            n_params = 2 * (len(config.hidden) + 1)
            members = []
            for i in range(config.n_members):
                params = [z[f"m{i}_p{j}"] for j in range(n_params)]
                members.append(MlpGaussianHead(params[0].shape[0], params[-1].shape[0] // 2,
                                               config.hidden, config.activation,
                                               config.logvar_bounds, params=params))
            ens = cls(members, meta["d_s"], meta["d_a"], z["in_shift"], z["in_scale"],
                      z["out_shift"], z["out_scale"], meta["r_max"], config)
        ens.train_log = meta.get("train_log", {})
        return ens


def sample_gaussian(mean, var, noise):
    return mean + np.sqrt(var) * noise


def train_ensemble(dataset, config=None, seed=0, r_max=1.0):
    """Fit every member by maximum likelihood on its own bootstrap resample."""
    config = config or EnsembleConfig()
    n = len(dataset)
    if n == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    root = np.random.SeedSequence(seed)
    init_seq, split_seq, *member_seqs = root.spawn(2 + config.n_members)
    ensemble = GaussianEnsemble.initialize(dataset, config, seed=init_seq, r_max=r_max)

    n_hold = min(int(n * config.holdout_fraction), config.max_holdout)
    perm = np.random.default_rng(split_seq).permutation(n)
    hold, train = perm[:n_hold], perm[n_hold:]
    if train.size == 0:
        train, hold = perm, perm[:0]
    _, x_all = ensemble._inputs(dataset.s, dataset.a)
    y_all = ensemble._targets(dataset)
    hold_set = dataset.subset(hold) if hold.size else None
    init_nll = ensemble.holdout_nll(hold_set) if hold_set is not None else None

    train_losses = []
    for member, seq in zip(ensemble.members, member_seqs):
        rng = np.random.default_rng(seq)
        boot = train[rng.integers(train.size, size=train.size)]
        opt = Adam(lr=config.lr)
        losses = []
        for _ in range(config.epochs):
            order = boot[rng.permutation(boot.size)]
            total = 0.0
            for start in range(0, order.size, config.batch_size):
                rows = order[start:start + config.batch_size]
                loss, grads = member.backward(x_all[rows], y_all[rows])
                scale = 1.0 / rows.size
                opt.step(member.params, [g * scale for g in grads])
                total += loss
            losses.append(total / order.size)
        train_losses.append(losses[-1] if losses else None)

    ensemble.train_log = {
        "seed": int(seed) if np.isscalar(seed) else None,
        "n_train": int(train.size),
        "n_holdout": int(hold.size),
        "holdout_nll_init": init_nll,
        "holdout_nll_final": ensemble.holdout_nll(hold_set) if hold_set is not None else None,
        "train_nll_final": train_losses,
    }
    log.info("trained ensemble: holdout nll %s", ensemble.train_log["holdout_nll_final"])
    return ensemble
