"""Discrete concurrent credit assignment and the epsilon-greedy Q-learning baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Hyperparams, RngStream
from .envs import TwoRoomsEnv
from .occupancy import LeakyCountModel, UniformPrior


@dataclass
class QTables:
    Q: np.ndarray
    Q_R: np.ndarray
    Q_S: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTables":
        return cls(np.zeros((n_states, n_actions)), np.zeros((n_states, n_actions)),
                   np.zeros((n_states, n_actions)))

    def copy(self) -> "QTables":
        return QTables(self.Q.copy(), self.Q_R.copy(), self.Q_S.copy())


def softmax_policy(q_row, beta: float) -> np.ndarray:
    z = beta * np.asarray(q_row, dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()


def elbo_sample(tables: QTables, s: int, a: int, lam: float) -> float:
    """Per-sample ELBO at 0-based (s, a): -lam/2 (Q - Q_R)^2 + Q_S."""
    d = tables.Q[s, a] - tables.Q_R[s, a]
    return -0.5 * lam * d * d + tables.Q_S[s, a]


def _sample(p: np.ndarray, u: float) -> int:
    # inverse-cdf draw; one uniform per decision keeps streams aligned across methods
    c = 0.0
    for i, pi in enumerate(p):
        c += pi
        if u < c:
            return i
    return len(p) - 1


def rollout_softmax(env: TwoRoomsEnv, Q: np.ndarray, beta: float, rng: RngStream):
    """One episode under the softmax policy. Returns (states, actions, final reward),
    states 1-based with ``len(states) == len(actions) + 1``."""
    s = env.reset(rng)
    states, actions = [s], []
    u = rng.random(env.horizon)
    done, r = False, 0.0
    i = 0
    while not done:
        a = _sample(softmax_policy(Q[s - 1], beta), u[i])
        s, r, done = env.step(a)
        actions.append(a)
        states.append(s)
        i += 1
    return states, actions, r


def greedy_action(q_row: np.ndarray, u: float) -> int:
    best = np.flatnonzero(q_row == q_row.max())
    return int(best[min(int(u * len(best)), len(best) - 1)])


def rollout_epsilon_greedy(env: TwoRoomsEnv, Q: np.ndarray, epsilon: float, rng: RngStream):
    s = env.reset(rng)
    states, actions = [s], []
    u = rng.random((env.horizon, 3))
    done, r = False, 0.0
    i = 0
    while not done:
        if u[i, 0] < epsilon:
            a = min(int(u[i, 1] * env.n_actions), env.n_actions - 1)
        else:
            a = greedy_action(Q[s - 1], u[i, 2])
        s, r, done = env.step(a)
        actions.append(a)
        states.append(s)
        i += 1
    return states, actions, r


def cca_trial_update(tables: QTables, states, actions, reward: float,
                     rho: LeakyCountModel, hp: Hyperparams) -> tuple[QTables, LeakyCountModel]:
    """Monte-Carlo CCA update from one finished episode (in place).

    ``states`` lists s_1..s_n (1-based ids) and ``actions`` the n-1 actions taken,
    so the inner loop over i = 1..n-1 visits every (state, action) pair.

    With ``hp.prior_baseline`` the intrinsic reward is ``log p*(s_n) - log rho(s_n)``
    rather than ``-log rho(s_n)``. The constant is not inert here: it multiplies a
    score-function update, and including it makes the uniform occupancy a fixed point.
    """
    alpha, beta, lam = hp.alpha, hp.beta, hp.lam
    s_n = states[-1]
    r_s = -rho.log_density(s_n)
    if hp.prior_baseline:
        r_s += UniformPrior.discrete(len(rho.probs)).log_value
    rho.update(s_n)
    Q, Q_R, Q_S = tables.Q, tables.Q_R, tables.Q_S
    for s, a in zip(states[:-1], actions):
        i = s - 1
        Q_R[i, a] = (1 - alpha) * Q_R[i, a] + alpha * reward
        Q_S[i, a] = (1 - alpha) * Q_S[i, a] + alpha * r_s
        Q[i, a] = (1 - alpha * lam) * Q[i, a] + alpha * lam * Q_R[i, a]
        e = elbo_sample(tables, i, a, lam)
        pi = softmax_policy(Q[i], beta)
        Q[i, a] += alpha / beta * e
        Q[i] -= alpha / beta * e * pi
    return tables, rho


def qlearning_trial_update(Q: np.ndarray, states, actions, reward: float,
                           hp: Hyperparams) -> np.ndarray:
    """One-step Q-learning backups along the episode, in visiting order."""
    alpha, gamma = hp.alpha, hp.gamma
    last = len(actions) - 1
    for k, (s, a, s2) in enumerate(zip(states[:-1], actions, states[1:])):
        if k == last:
            target = reward
        else:
            target = gamma * Q[s2 - 1].max()
        Q[s - 1, a] += alpha * (target - Q[s - 1, a])
    return Q


@dataclass
class TrialRecord:
    index: int
    final_state: int
    reward: float
    cumulative_reward: float
    occupancy_entropy: float | None


def run_discrete_experiment(env: TwoRoomsEnv, method: str, hp: Hyperparams, trials: int,
                            rng: RngStream) -> list[TrialRecord]:
    if method not in ("cca", "qlearning"):
        raise ValueError(f"tabular method must be 'cca' or 'qlearning', got {method!r}")
    records: list[TrialRecord] = []
    total = 0.0
    if method == "cca":
        tables = QTables.zeros(env.n_states, env.n_actions)
        rho = LeakyCountModel.uniform(env.n_states, hp.eta)
    else:
        Q = np.zeros((env.n_states, env.n_actions))
    for k in range(trials):
        if method == "cca":
            states, actions, r = rollout_softmax(env, tables.Q, hp.beta, rng)
            cca_trial_update(tables, states, actions, r, rho, hp)
            ent = rho.entropy()
        else:
            states, actions, r = rollout_epsilon_greedy(env, Q, hp.epsilon, rng)
            qlearning_trial_update(Q, states, actions, r, hp)
            ent = None
        total += r
        records.append(TrialRecord(k, states[-1], r, total, ent))
    return records


def final_state_entropy(final_states, n_states: int = 18) -> float:
    counts = np.bincount(np.asarray(final_states) - 1, minlength=n_states)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


MAX_ENTROPY_18 = math.log(18)
