"""Uncertainty estimators for model-generated transitions.

``SumoEstimator`` scores a synthetic transition by the log of one plus its
k-NN distance to the offline dataset. The ensemble baselines (max aleatoric,
max pairwise difference, leave-one-out KL) work on an
:class:`EnsemblePrediction`. ``knn_cross_entropy`` is the bias-corrected
particle estimator the KNN score is derived from, kept for validation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from .errors import DomainError, ParameterError, ShapeError
from .knn import Metric, SearchIndex, SearchVectorMode, search_vectors


@dataclass(frozen=True)
class SumoConfig:
    k: int = 1
    metric: Metric = Metric.EUCLIDEAN
    mode: SearchVectorMode = SearchVectorMode.SAS
    standardize: bool = True
    include_reward: bool = False

    def __post_init__(self):
        if isinstance(self.k, bool) or not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ParameterError("k must be an integer of at least 1")
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "mode", SearchVectorMode(self.mode))

    def to_dict(self):
        d = asdict(self)
        d["metric"] = self.metric.value
        d["mode"] = self.mode.value
        return d


@dataclass
class UncertaintyReport:
    estimator: str
    params: dict
    values: np.ndarray

    def summary(self):
        v = self.values
        return {"estimator": self.estimator, "params": self.params, "n": int(v.size),
                "mean": float(np.mean(v)), "max": float(np.max(v))}


@dataclass
class EnsemblePrediction:
    """Per-member diagonal Gaussians; arrays are ``(members, ..., dim)``."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)
        if self.mean.shape != self.var.shape or self.mean.ndim < 2:
            raise ShapeError("mean and var must share shape (members, ..., dim)")

    @property
    def n_members(self):
        return self.mean.shape[0]


def sumo_from_distance(distance):
    return np.log1p(distance)


class SumoEstimator:
    """KNN index over a dataset's search vectors plus the matching query transform."""

    name = "sumo"

    def __init__(self, dataset, config=None):
        self.config = config = config or SumoConfig()
        vectors = self._raw_vectors(dataset.s, dataset.a, dataset.s_next, dataset.r)
        if config.standardize:
            mean = vectors.mean(axis=0)
            std = vectors.std(axis=0)
            self._shift, self._scale = mean, np.where(std > 0.0, std, 1.0)
        else:
            self._shift = np.zeros(vectors.shape[1])
            self._scale = np.ones(vectors.shape[1])
        self.index = SearchIndex(self._transform(vectors), config.metric)
        if config.k > self.index.n:
            raise ParameterError(f"k={config.k} exceeds dataset size {self.index.n}")

    def _raw_vectors(self, s, a, s_next, r=None):
        return search_vectors(s, a, s_next, self.config.mode,
                              r if self.config.include_reward else None)

    def _transform(self, vectors):
        return (vectors - self._shift) / self._scale

    def query_vectors(self, s, a, s_next, r=None):
        if self.config.include_reward and r is None:
            raise ValueError("estimator was built with include_reward; pass r")
        return self._transform(self._raw_vectors(s, a, s_next, r))

    def distances(self, s, a, s_next, r=None):
        q = self.query_vectors(s, a, s_next, r)
        _, dist = self.index.query_many(q, self.config.k)
        return dist[:, -1]

    def __call__(self, s, a, s_next, r=None, member=None):
        """SUMO uncertainty for a batch of transitions."""
        return sumo_from_distance(self.distances(s, a, s_next, r))

    def threshold(self, dataset=None, alpha=1.0):
        # The index already holds the dataset it was built from.
        return truncation_threshold(self.index, self.config.k, alpha)


def sumo_uncertainty(estimator, transition):
    """Uncertainty of one transition against the estimator's dataset index."""
    t = transition
    return float(estimator(t.s, t.a, t.s_next, np.atleast_1d(t.r))[0])


def normalize_penalties(u, r_max, scale=None):
    """Rescale uncertainties to ``[0, r_max]`` by dividing by ``scale`` (default: batch max)."""
    u = np.asarray(u, dtype=np.float64)
    if r_max <= 0:
        raise ParameterError("r_max must be positive")
    if not np.all(np.isfinite(u)):
        raise DomainError("uncertainties must be finite")
    if np.any(u < 0):
        raise DomainError("uncertainties must be non-negative")
    top = float(np.max(u)) if scale is None else float(scale)
    if u.size == 0 or top <= 0.0:
        return np.zeros_like(u)
    return u / top * r_max


class RunningMax:
    """Global-max alternative to per-batch penalty normalisation."""

    def __init__(self):
        self.value = 0.0

    def update(self, u):
        if np.size(u):
            self.value = max(self.value, float(np.max(u)))
        return self.value


def truncation_threshold(index, k=1, alpha=1.0):
    """``alpha`` times the largest self-excluded SUMO score over the indexed dataset."""
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    d = index.self_knn_distances(k)
    return float(alpha * np.max(sumo_from_distance(d)))


def _check_var(pred):
    if np.any(pred.var <= 0.0):
        raise DomainError("predicted variances must be positive")


def max_aleatoric(pred):
    """Largest Frobenius norm of any member's diagonal covariance."""
    _check_var(pred)
    return np.max(np.sqrt(np.sum(pred.var ** 2, axis=-1)), axis=0)


def max_pairwise_diff(pred):
    """Largest Euclidean distance between two members' means."""
    if pred.n_members < 2:
        raise ParameterError("pairwise difference needs at least two members")
    mu = pred.mean
    best = np.zeros(mu.shape[1:-1])
    for i in range(pred.n_members):
        for j in range(i + 1, pred.n_members):
            d = mu[i] - mu[j]
            best = np.maximum(best, np.sqrt(np.sum(d * d, axis=-1)))
    return best


def gaussian_kl(mu_p, var_p, mu_q, var_q):
    """KL(N_p || N_q) for diagonal Gaussians, reduced over the last axis."""
    return 0.5 * np.sum(np.log(var_q / var_p) + (var_p + (mu_p - mu_q) ** 2) / var_q - 1.0, axis=-1)


def loo_kl(pred, member):
    """KL of ``member`` against the moment-matched mixture of all other members.

    ``member`` may be an int or an array of per-row member ids.
    """
    n = pred.n_members
    if n < 2:
        raise ParameterError("leave-one-out KL needs at least two members")
    _check_var(pred)
    batch_shape = pred.mean.shape[1:-1]
    member = np.broadcast_to(np.asarray(member, dtype=np.int64), batch_shape)
    if np.any(member < 0) or np.any(member >= n):
        raise ParameterError(f"member id out of range [0, {n})")
    mask = np.arange(n).reshape((n,) + (1,) * len(batch_shape)) != member[None]
    w = mask[..., None] / (n - 1.0)
    mu_bar = np.sum(w * pred.mean, axis=0)
    var_bar = np.sum(w * (pred.var + (pred.mean - mu_bar) ** 2), axis=0)
    if np.any(var_bar <= 0.0):
        raise DomainError("aggregated variance is not positive")
    pick = member[None, ..., None]
    mu_i = np.take_along_axis(pred.mean, np.broadcast_to(pick, (1,) + pred.mean.shape[1:]), 0)[0]
    var_i = np.take_along_axis(pred.var, np.broadcast_to(pick, (1,) + pred.var.shape[1:]), 0)[0]
    return gaussian_kl(mu_i, var_i, mu_bar, var_bar)


def loo_kl_max(pred):
    """Maximum of :func:`loo_kl` over every choice of held-out member."""
    return np.max(np.stack([loo_kl(pred, i) for i in range(pred.n_members)]), axis=0)


def unit_ball_log_volume(d):
    return 0.5 * d * math.log(math.pi) - float(gammaln(0.5 * d + 1.0))


def knn_cross_entropy(samples_p, samples_q, k=1, exclude_self=None):
    """Particle estimate of H(P, Q) in nats from samples of each distribution.

    When ``samples_q`` is the same array as ``samples_p`` (or ``exclude_self``
    is set) every point's own entry is skipped and ``m - 1`` reference points
    are counted.
    """
    x = np.atleast_2d(np.asarray(samples_p, dtype=np.float64))
    y = np.atleast_2d(np.asarray(samples_q, dtype=np.float64))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ParameterError("both sample sets must be non-empty")
    if x.shape[1] != y.shape[1]:
        raise ShapeError("sample sets differ in dimension")
    if exclude_self is None:
        exclude_self = samples_p is samples_q
    n, d = x.shape
    m = y.shape[0] - (1 if exclude_self else 0)
    if k > m:
        raise ParameterError(f"k={k} exceeds reference sample count {m}")
    index = SearchIndex(y)
    if exclude_self:
        if x.shape != y.shape:
            raise ShapeError("self-exclusion needs P and Q to be the same sample set")
        radius = index.self_knn_distances(k)
    else:
        radius = index.query_many(x, k)[1][:, -1]
    if np.any(radius <= 0.0):
        raise DomainError("zero k-NN distance; duplicate samples make the estimate diverge")
    return float(d * np.mean(np.log(radius)) + math.log(m) + unit_ball_log_volume(d) - digamma(k))


def discrete_cross_entropy(p, q):
    """H(P, Q) = -sum p log q in nats; infinite when q misses support of p."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    support = p > 0
    if np.any(q[support] == 0):
        return math.inf
    return float(-np.sum(p[support] * np.log(q[support])))


def total_variation(p, q):
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


class EnsembleEstimator:
    """Adapts a baseline to the estimator call signature using a trained ensemble."""

    kinds = ("max-aleatoric", "max-pairwise-diff", "loo-kl")

    def __init__(self, ensemble, kind, member_policy="rollout"):
        if kind not in self.kinds:
            raise ValueError(f"unknown estimator {kind!r}; choose from {self.kinds}")
        if member_policy not in ("rollout", "max"):
            raise ValueError("member_policy must be 'rollout' or 'max'")
        self.ensemble = ensemble
        self.kind = kind
        self.name = kind
        self.member_policy = member_policy

    def __call__(self, s, a, s_next=None, r=None, member=None):
        pred = self.ensemble.predict_all(s, a)
        if self.kind == "max-aleatoric":
            return max_aleatoric(pred)
        if self.kind == "max-pairwise-diff":
            return max_pairwise_diff(pred)
        if self.member_policy == "max" or member is None:
            return loo_kl_max(pred)
        return loo_kl(pred, member)

    def threshold(self, dataset, alpha=1.0):
        u = self(dataset.s, dataset.a, dataset.s_next, dataset.r)
        return float(alpha * np.max(u))


@dataclass
class ConstantEstimator:
    """Returns the same value for every transition (instrumentation aid)."""

    value: float = 0.0
    name: str = field(default="constant")

    def __call__(self, s, a, s_next=None, r=None, member=None):
        return np.full(np.atleast_2d(s).shape[0], float(self.value))

    def threshold(self, dataset, alpha=1.0):
        return float(alpha * self.value)
