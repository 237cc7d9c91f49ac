"""State occupancy models: leaky counts, Gaussian KDE, uniform prior and exact solves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_FLOOR = math.log(1e-8)
STD_FLOOR = 1e-6


@dataclass
class LeakyCountModel:
    """Exponential moving average of the empirical final-state distribution."""

    probs: np.ndarray
    eta: float

    @classmethod
    def uniform(cls, n_states: int, eta: float) -> "LeakyCountModel":
        return cls(np.full(n_states, 1.0 / n_states), eta)

    def update(self, s: int) -> "LeakyCountModel":
        """In-place leaky update on 1-based state ``s``."""
        self.probs *= 1.0 - self.eta
        self.probs[s - 1] += self.eta
        return self

    def log_density(self, s: int) -> float:
        p = self.probs[s - 1]
        return math.log(p) if p > 1e-8 else LOG_FLOOR

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


def leaky_update(model: LeakyCountModel, s_final: int) -> LeakyCountModel:
    return LeakyCountModel(model.probs.copy(), model.eta).update(s_final)


def log_density_discrete(model: LeakyCountModel, s: int) -> float:
    return model.log_density(s)


class TooFewPointsError(ValueError):
    pass


@dataclass
class GaussianKde:
    """Isotropic Gaussian kernels placed on standardized centers.

    ``bandwidth`` is expressed in standardized units; ``scale`` is the per-dimension
    standard deviation used to standardize (it enters the log-density as a
    Jacobian term).
    """

    centers: np.ndarray  # standardized, shape (n, d)
    bandwidth: float
    shift: np.ndarray
    scale: np.ndarray

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log-density at one point (shape (d,)) or a batch (shape (m, d))."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        z = (np.atleast_2d(x) - self.shift) / self.scale
        c = self.centers
        h2 = self.bandwidth ** 2
        sq = (z * z).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * z @ c.T
        np.maximum(sq, 0.0, out=sq)
        sq *= -0.5 / h2
        peak = sq.max(axis=1, keepdims=True)
        sq -= peak
        np.exp(sq, out=sq)
        out = np.log(sq.sum(axis=1)) + peak[:, 0]
        out += -math.log(self.n) - 0.5 * self.dim * math.log(2 * math.pi * h2) \
            - np.log(self.scale).sum()
        return out[0] if single else out


def scott_bandwidth(n: int, d: int) -> float:
    return n ** (-1.0 / (d + 4))


def kde_fit(points, bandwidth: float | str | None = "scott", standardize: bool = True) -> GaussianKde:
    """Fit a Gaussian KDE. ``bandwidth`` is a positive float or ``"scott"`` / ``None``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, d = pts.shape
    if n < 2:
        raise TooFewPointsError(f"KDE needs at least 2 points, got {n}")
    if standardize:
        shift = pts.mean(0)
        scale = np.maximum(pts.std(0), STD_FLOOR)
    else:
        shift = np.zeros(d)
        scale = np.ones(d)
    if bandwidth is None or bandwidth == "scott":
        h = scott_bandwidth(n, d)
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ValueError("bandwidth must be > 0")
    return GaussianKde((pts - shift) / scale, h, shift, scale)


def kde_log_density(model: GaussianKde, x) -> float:
    return float(model.log_density(np.atleast_1d(np.asarray(x, dtype=np.float64))))


@dataclass(frozen=True)
class UniformPrior:
    log_value: float

    @classmethod
    def discrete(cls, n_states: int) -> "UniformPrior":
        return cls(-math.log(n_states))

    @classmethod
    def box(cls, low, high) -> "UniformPrior":
        return cls(-float(np.log(np.asarray(high) - np.asarray(low)).sum()))

    def log_density(self, s=None) -> float:
        return self.log_value


class SingularSystemError(np.linalg.LinAlgError):
    pass


def policy_transition_matrix(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """M[s, s'] = sum_a pi(a|s) P(s'|s, a)."""
    return np.einsum("sa,sat->st", pi, P)


def _check_inputs(P, pi, gamma):
    P = np.asarray(P, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be < 1 (and >= 0)")
    if P.ndim != 3 or pi.shape != P.shape[:2]:
        raise ValueError(f"shape mismatch: P {P.shape}, pi {pi.shape}")
    if not np.allclose(P.sum(-1), 1.0) or not np.allclose(pi.sum(-1), 1.0):
        raise ValueError("P and pi must be row-stochastic")
    return P, pi


def _solve_occupancy(M: np.ndarray, gamma: float, p0: np.ndarray) -> np.ndarray:
    A = np.eye(M.shape[0]) - gamma * M.T
    try:
        rho = np.linalg.solve(A, (1.0 - gamma) * p0)
    except np.linalg.LinAlgError as e:  # pragma: no cover - impossible for gamma < 1
        raise SingularSystemError(str(e)) from e
    return rho


def exact_occupancy(P, pi, gamma: float, p0) -> np.ndarray:
    """Discounted state occupancy: the solution of rho = (1-g) p0 + g M^T rho."""
    P, pi = _check_inputs(P, pi, gamma)
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (P.shape[0],) or not np.isclose(p0.sum(), 1.0):
        raise ValueError("p0 must be a distribution over states")
    return _solve_occupancy(policy_transition_matrix(P, pi), gamma, p0)


def exact_conditional_occupancy(P, pi, gamma: float, s: int, a: int) -> np.ndarray:
    """Occupancy of the states that follow (s, a); ``s`` and ``a`` are 0-based indices."""
    P, pi = _check_inputs(P, pi, gamma)
    return _solve_occupancy(policy_transition_matrix(P, pi), gamma, P[s, a])


def occupancy_residual(rho, P, pi, gamma, p0) -> float:
    M = policy_transition_matrix(np.asarray(P), np.asarray(pi))
    return float(np.abs(rho - (1 - gamma) * np.asarray(p0) - gamma * M.T @ rho).max())


def return_estimator(r: float, gamma: float) -> float:
    """Total discounted return read off a single occupancy sample: r / (1 - gamma)."""
    if not gamma < 1.0:
        raise ValueError("gamma must be < 1")
    return r / (1.0 - gamma)


def policy_evaluation_q(P, pi, gamma: float, r) -> np.ndarray:
    """Q[s, a] = E[sum_k gamma^k r(s_{k+1}, a_{k+1})] with s_1 ~ P(.|s, a).

    Rewards ``r[s', a']`` are collected when acting in the successor states,
    which is the convention under which ``rho(.|s,a) . rbar / (1-gamma)`` is exact.
    """
    P, pi = _check_inputs(P, pi, gamma)
    r = np.asarray(r, dtype=np.float64)
    M = policy_transition_matrix(P, pi)
    rbar = (pi * r).sum(1)
    V = np.linalg.solve(np.eye(M.shape[0]) - gamma * M, rbar)
    return P @ V


def monte_carlo_occupancy(P, pi, gamma: float, p0, n_samples: int, rng) -> np.ndarray:
    """Monte-Carlo occupancy oracle.

    Each of ``n_samples`` chains starts from ``p0`` and survives each step with
    probability ``gamma``; the state at which it stops is one occupancy sample.
    Chains are exchangeable, so only per-state counts are tracked: binomial
    stopping, then a multinomial move of the survivors in each state.
    """
    P = np.asarray(P, dtype=np.float64)
    M = policy_transition_matrix(P, np.asarray(pi, dtype=np.float64))
    M = M / M.sum(1, keepdims=True)
    p0 = np.asarray(p0, dtype=np.float64)
    gen = rng.gen if hasattr(rng, "gen") else rng
    alive = gen.multinomial(n_samples, p0 / p0.sum())
    final = np.zeros(len(p0), dtype=np.int64)
    while alive.any():
        stop = gen.binomial(alive, 1.0 - gamma)
        final += stop
        alive = alive - stop
        alive = gen.multinomial(alive, M).sum(0)
    return final / n_samples


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
