"""Experience records, replay storage, seeded random streams and hyperparameters."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from typing import Any, Sequence

import numpy as np


class InsufficientDataError(ValueError):
    """Raised when a buffer holds fewer samples than requested."""


class RngStream:
    """Reproducible random stream.

    Backed by numpy's PCG64 bit generator, whose output is specified
    bit-for-bit across platforms. Children are derived by hashing the parent
    seed together with the child index (``SeedSequence`` spawn keys), so
    ``split`` is deterministic and the children are independent.
    """

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def split(self, k: int) -> list["RngStream"]:
        # spawn() mutates the sequence's child counter; a fresh sequence keeps
        # split(k) a pure function of (seed, spawn_key).
        seq = np.random.SeedSequence(self._seq.entropy, spawn_key=self._seq.spawn_key)
        return [RngStream(self.seed, child) for child in seq.spawn(k)]

    def copy(self) -> "RngStream":
        return copy.deepcopy(self)

    # thin pass-throughs used throughout the package
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def choice(self, n, size=None, replace=True, p=None):
        return self.gen.choice(n, size=size, replace=replace, p=p)


@dataclass(frozen=True)
class Transition:
    s: Any
    a: Any
    r: float
    s_next: Any
    done: bool

    def __post_init__(self):
        if not np.isfinite(self.r):
            raise ValueError(f"reward must be finite, got {self.r}")


@dataclass
class Trajectory:
    transitions: list[Transition] = field(default_factory=list)

    def append(self, t: Transition) -> None:
        if self.transitions and not _same_state(self.transitions[-1].s_next, t.s):
            raise ValueError("trajectory chain broken: s_next of previous step != s")
        self.transitions.append(t)

    @property
    def states(self) -> list:
        if not self.transitions:
            return []
        return [t.s for t in self.transitions] + [self.transitions[-1].s_next]

    @property
    def actions(self) -> list:
        return [t.a for t in self.transitions]

    def is_chain_consistent(self) -> bool:
        return all(
            _same_state(a.s_next, b.s) for a, b in zip(self.transitions, self.transitions[1:])
        )

    def __len__(self) -> int:
        return len(self.transitions)


def _same_state(x, y) -> bool:
    return bool(np.array_equal(np.asarray(x), np.asarray(y)))


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored as float64 arrays."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be > 0")
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, act_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = t.r
        self.s_next[i] = t.s_next
        self.done[i] = float(t.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self) -> int:
        return self.size

    def transition(self, i: int) -> Transition:
        return Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]),
                          self.s_next[i].copy(), bool(self.done[i]))

    def sample_indices(self, n: int, rng: RngStream) -> np.ndarray:
        # with replacement, so any non-empty buffer can serve any n
        if self.size == 0:
            raise InsufficientDataError(f"cannot sample {n} transitions from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def sample_batch(self, n: int, rng: RngStream) -> dict[str, np.ndarray]:
        """Uniform draw of ``n`` transitions, with replacement."""
        idx = self.sample_indices(n, rng)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "s_next": self.s_next[idx], "done": self.done[idx]}

    def sample_states(self, n: int, rng: RngStream) -> np.ndarray:
        """Up to ``n`` distinct next-states, drawn without replacement."""
        if self.size == 0:
            raise InsufficientDataError("cannot sample states from an empty buffer")
        m = min(n, self.size)
        idx = rng.choice(self.size, size=m, replace=False)
        return self.s_next[idx]


def buffer_push(buffer: ReplayBuffer, t: Transition) -> ReplayBuffer:
    buffer.push(t)
    return buffer


def buffer_sample_batch(buffer: ReplayBuffer, n: int, rng: RngStream) -> list[Transition]:
    return [buffer.transition(i) for i in buffer.sample_indices(n, rng)]


def buffer_sample_states(buffer: ReplayBuffer, n: int, rng: RngStream) -> np.ndarray:
    return buffer.sample_states(n, rng)


_SIGN_ALIASES = {"paper": "verbatim"}


@dataclass
class Hyperparams:
    alpha: float = 0.3
    beta: float = 1.0
    gamma: float = 0.99
    lam: float = 0.0
    eta: float = 0.005
    epsilon: float = 0.1
    # add log p*(s') = -log|S| to the discrete intrinsic reward
    prior_baseline: bool = True
    # actor-critic extras
    lr: float = 3e-4
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    polyak: float = 0.995
    hidden: tuple[int, ...] = (32, 32)
    kde_bandwidth: float | None = None  # None selects Scott's rule
    kde_samples: int = 1000
    updates_per_epoch: int | None = None  # None: one update per collected step
    warmup_steps: int = 10_000
    elbo_target_sign: str = "corrected"
    eval_episodes: int = 1

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.elbo_target_sign = _SIGN_ALIASES.get(self.elbo_target_sign, self.elbo_target_sign)
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be < 1 (and >= 0)")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        for name in ("batch_size", "buffer_capacity", "kde_samples", "eval_episodes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not 0.0 <= self.polyak <= 1.0:
            raise ValueError("polyak must lie in [0, 1]")
        if not self.hidden or any(h <= 0 for h in self.hidden):
            raise ValueError("hidden must list positive layer widths")
        if self.kde_bandwidth is not None and self.kde_bandwidth <= 0:
            raise ValueError("kde_bandwidth must be > 0")
        if self.updates_per_epoch is not None and self.updates_per_epoch < 0:
            raise ValueError("updates_per_epoch must be >= 0")
        if self.elbo_target_sign not in ("corrected", "verbatim"):
            raise ValueError("elbo_target_sign must be 'corrected' or 'verbatim'")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def as_float_array(x: Sequence[float] | float) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.float64))
