"""Small dense networks with hand-written reverse-mode gradients.

Arrays are plain ``numpy.ndarray`` (float64, row-major). A network's
parameters are a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
``(fan_in, fan_out)``; inputs are batches of row vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


class Activation:
    """Elementwise nonlinearity with its derivative expressed via pre-activation."""

    def __init__(self, name):
        if name not in ("silu", "tanh", "relu", "linear"):
            raise ValueError(f"unknown activation {name!r}")
        self.name = name

    def __call__(self, z):
        if self.name == "silu":
            return z * _sigmoid(z)
        if self.name == "tanh":
            return np.tanh(z)
        if self.name == "relu":
            return np.maximum(z, 0.0)
        return z

    def grad(self, z):
        if self.name == "silu":
            s = _sigmoid(z)
            return s * (1.0 + z * (1.0 - s))
        if self.name == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        if self.name == "relu":
            return (z > 0.0).astype(z.dtype)
        return np.ones_like(z)

    def __repr__(self):
        return f"Activation({self.name!r})"


class Mlp:
    """Feedforward network: hidden layers use ``activation``, output layer is linear."""

    def __init__(self, sizes, activation="silu", rng=None, params=None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        self.activation = Activation(activation)
        if params is not None:
            params = [np.array(p, dtype=np.float64) for p in params]
            self._check_params(params)
            self.params = params
        else:
            rng = np.random.default_rng(rng)
            self.params = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                self.params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                self.params.append(np.zeros(fan_out))

    def _check_params(self, params):
        if len(params) != 2 * (len(self.sizes) - 1):
            raise ShapeError("parameter list does not match layer sizes")
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if params[2 * i].shape != (fan_in, fan_out) or params[2 * i + 1].shape != (fan_out,):
                raise ShapeError(f"layer {i} parameter shapes do not match sizes")

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def copy(self):
        return Mlp(self.sizes, self.activation.name, params=[p.copy() for p in self.params])

    def forward(self, x, keep_cache=False):
        """Evaluate the network on a batch ``x`` of shape ``(B, in_dim)``.

        With ``keep_cache`` the pre-activations and layer inputs are returned
        as well, for use by :meth:`backward`.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"expected input of shape (B, {self.in_dim}), got {x.shape}")
        inputs, pre = [], []
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W + b
            if keep_cache:
                inputs.append(h)
                pre.append(z)
            h = z if i == last else self.activation(z)
        if keep_cache:
            return h, (inputs, pre)
        return h

    def backward(self, cache, grad_out):
        """Backpropagate ``grad_out`` (dL/d output). Returns ``(param_grads, grad_input)``."""
        inputs, pre = cache
        grads = [None] * len(self.params)
        g = grad_out
        for i in reversed(range(self.n_layers)):
            if i != self.n_layers - 1:
                g = g * self.activation.grad(pre[i])
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient", layer=i)
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g


def soft_clamp(x, lo, hi):
    """Smoothly squash ``x`` into ``[lo, hi]``; returns value and derivative."""
    upper = hi - _softplus(hi - x)
    d_upper = _sigmoid(hi - x)
    y = lo + _softplus(upper - lo)
    dy = _sigmoid(upper - lo) * d_upper
    return np.clip(y, lo, hi), dy


def gaussian_nll(mu, logvar, target):
    """Negative log-likelihood of ``target`` under a diagonal Gaussian.

    Reduces over the last axis, so batched inputs give one value per row.
    """
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not (mu.shape == logvar.shape == target.shape):
        raise ShapeError(f"shape mismatch: {mu.shape}, {logvar.shape}, {target.shape}")
    sq = (target - mu) ** 2
    return 0.5 * np.sum(logvar + sq * np.exp(-logvar) + LOG_2PI, axis=-1)


class MlpGaussianHead:
    """Mlp whose output is split into a mean and a clamped log-variance."""

    def __init__(self, in_dim, out_dim, hidden=(200, 200), activation="silu",
                 logvar_bounds=(-10.0, 2.0), rng=None, params=None):
        self.out_dim = int(out_dim)
        self.logvar_min, self.logvar_max = (float(v) for v in logvar_bounds)
        if not self.logvar_min < self.logvar_max:
            raise ValueError("logvar_bounds must be increasing")
        self.hidden = tuple(int(h) for h in hidden)
        self.net = Mlp([in_dim, *self.hidden, 2 * self.out_dim], activation, rng=rng, params=params)

    @property
    def in_dim(self):
        return self.net.in_dim

    @property
    def params(self):
        return self.net.params

    @params.setter
    def params(self, values):
        self.net.params = values

    def copy(self):
        return MlpGaussianHead(self.in_dim, self.out_dim, self.hidden, self.net.activation.name,
                               (self.logvar_min, self.logvar_max),
                               params=[p.copy() for p in self.params])

    def _split(self, out):
        mu = out[:, : self.out_dim]
        logvar, dlogvar = soft_clamp(out[:, self.out_dim:], self.logvar_min, self.logvar_max)
        return mu, logvar, dlogvar

    def forward(self, x):
        """Return ``(mu, logvar)``; a 1-D ``x`` gives 1-D outputs."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite values")
        mu, logvar, _ = self._split(self.net.forward(x))
        if single:
            return mu[0], logvar[0]
        return mu, logvar

    def backward(self, x, target):
        """Gradients of the summed NLL over the batch. Returns ``(loss, grads)``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        target = np.atleast_2d(np.asarray(target, dtype=np.float64))
        if target.shape != (x.shape[0], self.out_dim):
            raise ShapeError(f"target shape {target.shape} does not match output")
        out, cache = self.net.forward(x, keep_cache=True)
        for i, z in enumerate(cache[1]):
            if not np.all(np.isfinite(z)):
                raise NumericError("non-finite activation", layer=i)
        mu, logvar, dlogvar = self._split(out)
        inv_var = np.exp(-logvar)
        err = mu - target
        loss = float(np.sum(gaussian_nll(mu, logvar, target)))
        if not math.isfinite(loss):
            raise NumericError("non-finite loss", layer=self.net.n_layers - 1)
        g_mu = err * inv_var
        g_lv = 0.5 * (1.0 - err * err * inv_var) * dlogvar
        grads, _ = self.net.backward(cache, np.concatenate([g_mu, g_lv], axis=1))
        return loss, grads


@dataclass
class Adam:
    """Adaptive-moment optimizer with bias correction."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        """Update ``params`` in place and return them."""
        if len(params) != len(grads):
            raise ShapeError("params and grads differ in length")
        for p, g in zip(params, grads):
            if p.shape != np.shape(g):
                raise ShapeError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        elif any(m.shape != p.shape for m, p in zip(self.m, params)):
            raise ShapeError("optimizer state does not match parameters")
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params
