"""Two-rooms gridworld and continuous mountain car."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import RngStream

E, S, W, N = 0, 1, 2, 3
ACTION_NAMES = ("E", "S", "W", "N")
_MOVES = {E: (0, 1), S: (1, 0), W: (0, -1), N: (-1, 0)}


class EpisodeFinishedError(RuntimeError):
    pass


class TwoRoomsEnv:
    """3x6 grid split into two 3x3 rooms joined by a door between cells 9 and 10.

    Cells are numbered row-major from 1 (upper-left) to 18 (lower-right).
    Every episode lasts exactly ``horizon`` moves; the reward is paid on the
    final move, 1 if the agent stands on ``goal`` and 0 otherwise.
    """

    rows, cols = 3, 6
    n_states = 18
    n_actions = 4
    start = 1
    goal = 18
    door = (9, 10)

    def __init__(self, horizon: int = 7):
        self.horizon = horizon
        self.max_episode_steps = horizon
        self.state = self.start
        self.t = 0
        self.done = True

    def reset(self, rng: RngStream | None = None) -> int:
        self.state = self.start
        self.t = 0
        self.done = False
        return self.state

    def step(self, a: int) -> tuple[int, float, bool]:
        if self.done:
            raise EpisodeFinishedError("step() called on a finished episode; call reset()")
        self.state = tworooms_transition(self.state, a)
        self.t += 1
        self.done = self.t >= self.horizon
        reward = 1.0 if self.done and self.state == self.goal else 0.0
        return self.state, reward, self.done

    def reward(self, s_final: int) -> float:
        return 1.0 if s_final == self.goal else 0.0

    @staticmethod
    def room(s: int) -> str:
        return "A" if _col(s) < 3 else "B"

    def transition_tensor(self) -> np.ndarray:
        """P[s, a, s'] over 0-based indices."""
        P = np.zeros((self.n_states, self.n_actions, self.n_states))
        for s in range(1, self.n_states + 1):
            for a in range(self.n_actions):
                P[s - 1, a, tworooms_transition(s, a) - 1] = 1.0
        return P


def _col(s: int) -> int:
    return (s - 1) % TwoRoomsEnv.cols


def tworooms_transition(s: int, a: int) -> int:
    """Deterministic grid move; walls and the room divider leave ``s`` unchanged."""
    if not 1 <= s <= TwoRoomsEnv.n_states:
        raise ValueError(f"state {s} outside 1..18")
    if a not in _MOVES:
        raise ValueError(f"action {a} outside 0..3")
    r, c = divmod(s - 1, TwoRoomsEnv.cols)
    dr, dc = _MOVES[a]
    r2, c2 = r + dr, c + dc
    if not (0 <= r2 < TwoRoomsEnv.rows and 0 <= c2 < TwoRoomsEnv.cols):
        return s
    s2 = r2 * TwoRoomsEnv.cols + c2 + 1
    crosses_divider = (c < 3) != (c2 < 3)
    if crosses_divider and {s, s2} != set(TwoRoomsEnv.door):
        return s
    return s2


def shortest_path_length(env: TwoRoomsEnv, goal: int) -> int:
    dist = {env.start: 0}
    queue = deque([env.start])
    while queue:
        s = queue.popleft()
        if s == goal:
            return dist[s]
        for a in range(env.n_actions):
            s2 = tworooms_transition(s, a)
            if s2 not in dist:
                dist[s2] = dist[s] + 1
                queue.append(s2)
    raise ValueError(f"goal {goal} unreachable")


@dataclass
class MountainCarEnv:
    """Continuous mountain car with the usual public-benchmark constants."""

    min_position: float = -1.2
    max_position: float = 0.6
    max_speed: float = 0.07
    power: float = 0.0015
    gravity: float = 0.0025
    goal_position: float = 0.45
    goal_bonus: float = 100.0
    action_cost: float = 0.1
    max_episode_steps: int = 999

    obs_dim = 2
    act_dim = 1
    action_low = np.array([-1.0])
    action_high = np.array([1.0])

    def __post_init__(self):
        self.state = np.zeros(2)
        self.t = 0
        self.done = True
        self.reached_goal = False
        self.obs_low = np.array([self.min_position, -self.max_speed])
        self.obs_high = np.array([self.max_position, self.max_speed])

    def reset(self, rng: RngStream) -> np.ndarray:
        self.state = np.array([rng.uniform(-0.6, -0.4), 0.0])
        self.t = 0
        self.done = False
        self.reached_goal = False
        return self.state.copy()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        """Advance one step. ``done`` covers both reaching the goal and the step cap;
        ``reached_goal`` tells the two apart."""
        if self.done:
            raise EpisodeFinishedError("step() called on a finished episode; call reset()")
        f = float(np.clip(np.asarray(action, dtype=float).reshape(-1)[0], -1.0, 1.0))
        p, v = self.state
        v = v + f * self.power - self.gravity * math.cos(3 * p)
        v = min(max(v, -self.max_speed), self.max_speed)
        p = p + v
        p = min(max(p, self.min_position), self.max_position)
        if p == self.min_position and v < 0:
            v = 0.0
        self.state = np.array([p, v])
        self.t += 1
        self.reached_goal = p >= self.goal_position
        reward = -self.action_cost * f * f + (self.goal_bonus if self.reached_goal else 0.0)
        self.done = self.reached_goal or self.t >= self.max_episode_steps
        return self.state.copy(), reward, self.done


ENVS = {"tworooms": TwoRoomsEnv, "mountaincar": MountainCarEnv}


def make_env(name: str):
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown env {name!r}; expected one of {sorted(ENVS)}") from None
