"""Feed-forward networks with hand-written backprop, Adam, and a squashed Gaussian head.

Every ``Mlp`` carries a leading *member* axis so that an ensemble of K
independent networks with identical shapes (e.g. twin critics) runs as one
batched matmul. A plain network is the K = 1 case.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .core import RngStream

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class MissingCacheError(RuntimeError):
    pass


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    if name == "relu":
        return g * (z > 0)
    if name == "tanh":
        return g * (1.0 - h * h)
    return g


class Mlp:
    def __init__(self, sizes, rng: RngStream | None = None, activation: str = "relu",
                 out_activation: str = "linear", members: int = 1, zero: bool = False):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.activation = activation
        self.out_activation = out_activation
        self.members = members
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if zero:
                W = np.zeros((members, fan_in, fan_out))
                b = np.zeros((members, 1, fan_out))
            else:
                bound = 1.0 / math.sqrt(fan_in)
                W = rng.uniform(-bound, bound, (members, fan_in, fan_out))
                b = rng.uniform(-bound, bound, (members, 1, fan_out))
            self.params += [W, b]
        self._cache = None

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def activations(self):
        return [self.activation] * (self.n_layers - 1) + [self.out_activation]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """x: (B, d_in) shared by all members, or (K, B, d_in). Returns (K, B, d_out)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input dim {self.sizes[0]}, got {x.shape[-1]}")
        inputs, pre, post = [], [], []
        h = x
        for l, act in enumerate(self.activations()):
            W, b = self.params[2 * l], self.params[2 * l + 1]
            inputs.append(h)
            z = h @ W + b
            h = _act(act, z)
            pre.append(z)
            post.append(h)
        self._cache = (x.ndim == 2, inputs, pre, post)
        return h

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Reverse pass for the most recent ``forward``.

        Returns parameter gradients (same layout as ``params``) and the gradient
        with respect to the input; a shared 2-D input receives the sum over members.
        """
        if self._cache is None:
            raise MissingCacheError("backward() called before forward()")
        shared, inputs, pre, post = self._cache
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        g = np.asarray(grad_out, dtype=np.float64)
        for l in reversed(range(self.n_layers)):
            act = self.activations()[l]
            g = _act_grad(act, pre[l], post[l], g)
            h = inputs[l]
            W = self.params[2 * l]
            if h.ndim == 2:
                grads[2 * l] = h.T @ g
            else:
                grads[2 * l] = h.transpose(0, 2, 1) @ g
            grads[2 * l + 1] = g.sum(axis=1, keepdims=True)
            g = g @ W.transpose(0, 2, 1)
        if shared:
            g = g.sum(axis=0)
        return grads, g

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = self.sizes
        other.activation = self.activation
        other.out_activation = self.out_activation
        other.members = self.members
        other.params = [p.copy() for p in self.params]
        other._cache = None
        return other

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def save(self, path) -> None:
        """Write parameters as an ``.npz`` archive (float64 arrays with shape headers)."""
        np.savez(Path(path), sizes=np.array(self.sizes), members=self.members,
                 activation=self.activation, out_activation=self.out_activation,
                 **{f"p{i}": p for i, p in enumerate(self.params)})

    @classmethod
    def load(cls, path) -> "Mlp":
        with np.load(Path(path)) as f:
            net = cls(f["sizes"], members=int(f["members"]), activation=str(f["activation"]),
                      out_activation=str(f["out_activation"]), zero=True)
            net.params = [f[f"p{i}"].astype(np.float64) for i in range(len(net.params))]
        return net


def forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)


def backward(net: Mlp, upstream_grad) -> tuple[list[np.ndarray], np.ndarray]:
    return net.backward(upstream_grad)


class AdamState:
    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place bias-corrected Adam update."""
        if len(params) != len(self.m):
            raise ValueError("parameter list does not match optimizer state")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        step = self.lr * math.sqrt(c2) / c1
        eps = self.eps * math.sqrt(c2)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= step * m / (np.sqrt(v) + eps)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    state.step(params, grads)


def log1m_tanh_sq(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), stable for large |u|."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


class SquashedGaussianHead:
    """Maps trunk outputs [mean, log_std] to actions in a box via tanh squashing."""

    def __init__(self, low, high):
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.half_range = (self.high - self.low) / 2.0
        self.log_half_range = float(np.log(self.half_range).sum())
        self.act_dim = self.low.shape[0]

    def forward(self, out: np.ndarray, noise: np.ndarray | None):
        """out: (B, 2k). ``noise=None`` gives the deterministic (mode) action.

        Returns (action, log_prob, cache); log_prob has shape (B,).
        """
        k = self.act_dim
        mean = out[:, :k]
        raw_log_std = out[:, k:]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        eps = np.zeros_like(mean) if noise is None else noise
        u = mean + std * eps
        t = np.tanh(u)
        action = self.low + self.half_range * (t + 1.0)
        log_prob = (-0.5 * eps * eps - log_std - HALF_LOG_2PI - log1m_tanh_sq(u)).sum(1) \
            - self.log_half_range
        cache = (raw_log_std, std, eps, t)
        return action, log_prob, cache

    def backward(self, cache, d_action: np.ndarray, d_log_prob: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the trunk output given upstream grads on action and log_prob."""
        raw_log_std, std, eps, t = cache
        dlp = d_log_prob[:, None]
        du = d_action * self.half_range * (1.0 - t * t) + dlp * 2.0 * t
        d_mean = du
        d_log_std = du * std * eps - dlp
        d_log_std = d_log_std * ((raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX))
        return np.concatenate([d_mean, d_log_std], axis=1)


class Actor:
    """Relu trunk producing mean and log-std, followed by a squashed Gaussian head."""

    def __init__(self, obs_dim: int, act_dim: int, hidden, low, high, rng: RngStream):
        self.trunk = Mlp((obs_dim, *hidden, 2 * act_dim), rng, activation="relu")
        self.head = SquashedGaussianHead(low, high)
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.trunk.params

    def forward(self, s: np.ndarray, noise: np.ndarray | None):
        out = self.trunk.forward(s)[0]
        action, log_prob, hc = self.head.forward(out, noise)
        self._cache = hc
        return action, log_prob

    def backward(self, d_action: np.ndarray, d_log_prob: np.ndarray) -> list[np.ndarray]:
        if self._cache is None:
            raise MissingCacheError("backward() called before forward()")
        d_out = self.head.backward(self._cache, d_action, d_log_prob)
        grads, _ = self.trunk.backward(d_out[None])
        return grads

    def act(self, s: np.ndarray, rng: RngStream | None = None, deterministic: bool = False):
        s = np.atleast_2d(s)
        noise = None if deterministic else rng.normal((s.shape[0], self.head.act_dim))
        action, _ = self.forward(s, noise)
        return action

    def copy(self) -> "Actor":
        other = Actor.__new__(Actor)
        other.trunk = self.trunk.copy()
        other.head = self.head
        other._cache = None
        return other


def sample_squashed_gaussian(head: SquashedGaussianHead, out: np.ndarray, rng: RngStream):
    noise = rng.normal(out[:, : head.act_dim].shape)
    action, log_prob, _ = head.forward(out, noise)
    return action, log_prob


def polyak_update(target: list[np.ndarray], online: list[np.ndarray], tau: float) -> None:
    """target <- tau * target + (1 - tau) * online, in place."""
    for t, o in zip(target, online):
        t *= tau
        t += (1.0 - tau) * o
