"""Off-policy actor-critic CCA and its SAC-lite ablation.

Critics are stored as one ``Mlp`` ensemble over concat(state, action):
members 0,1 are the twin reward critics Q_R, members 2,3 (CCA only) the twin
ELBO critics Q_ELBO. Each member has its own parameters, and Adam and polyak
averaging act element-wise, so stacking changes nothing numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Hyperparams, InsufficientDataError, ReplayBuffer, RngStream, Transition
from .nn import Actor, AdamState, Mlp, polyak_update
from .occupancy import GaussianKde, kde_fit


def loss_R(q_sa, r, q_target_next, done, gamma: float, lam: float):
    """(lam/2) (Q_R(s,a) - r - gamma Qbar_R(s',a'))^2; bootstrap dropped at terminal states."""
    y = r + gamma * (1.0 - np.asarray(done, dtype=float)) * q_target_next
    return 0.5 * lam * (q_sa - y) ** 2


def elbo_target(l_r, log_rho, q_target_next, done, gamma: float, beta: float,
                sign: str = "corrected"):
    """Regression target for Q_ELBO.

    ``corrected``: -(1-gamma)/beta (L_R + log rho(s')) + gamma Qbar_ELBO(s',a'), so that
    novel (low-density) next states and well-fitted reward critics raise Q_ELBO.
    ``verbatim``: the same with the instantaneous term's sign flipped.
    """
    inst = (1.0 - gamma) / beta * (np.asarray(l_r) + np.asarray(log_rho))
    if sign == "corrected":
        inst = -inst
    elif sign != "verbatim":
        raise ValueError(f"unknown sign convention {sign!r}")
    return inst + gamma * (1.0 - np.asarray(done, dtype=float)) * q_target_next


def loss_ELBO(q_sa, l_r, log_rho, q_target_next, done, gamma: float, beta: float,
              sign: str = "corrected"):
    y = elbo_target(l_r, log_rho, q_target_next, done, gamma, beta, sign)
    return 0.5 * (q_sa - y) ** 2


def loss_actor(q_r, log_prob, beta: float, q_elbo=None):
    """-Q_R + (1/beta) log pi - Q_ELBO; ``q_elbo=None`` gives the SAC-lite form."""
    out = -np.asarray(q_r) + np.asarray(log_prob) / beta
    if q_elbo is not None:
        out = out - np.asarray(q_elbo)
    return out


def _min_pair(q: np.ndarray, i: int):
    """Element-wise min over members i, i+1 and a mask of which member won."""
    first = q[i] <= q[i + 1]
    return np.where(first, q[i], q[i + 1]), first


@dataclass
class Diagnostics:
    loss_r: float = 0.0
    loss_elbo: float = 0.0
    loss_actor: float = 0.0
    mean_log_rho: float = 0.0
    updates: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class ActorCriticAgent:
    """Shared machinery; ``use_elbo`` switches between CCA and SAC-lite."""

    def __init__(self, obs_dim: int, act_dim: int, low, high, hp: Hyperparams,
                 rng: RngStream, use_elbo: bool = True):
        self.hp = hp
        self.use_elbo = use_elbo
        self.obs_dim, self.act_dim = obs_dim, act_dim
        init_rng = rng
        self.actor = Actor(obs_dim, act_dim, hp.hidden, low, high, init_rng)
        k = 4 if use_elbo else 2
        self.critics = Mlp((obs_dim + act_dim, *hp.hidden, 1), init_rng, activation="relu",
                           members=k)
        self.targets = self.critics.copy()
        self.actor_opt = AdamState(self.actor.params, lr=hp.lr)
        self.critic_opt = AdamState(self.critics.params, lr=hp.lr)
        self.kde: GaussianKde | None = None
        # filled on instrumented runs; see tests
        self.last_bootstrap: np.ndarray | None = None
        self.last_target_q: np.ndarray | None = None

    # -- helpers -----------------------------------------------------------
    def _q(self, net: Mlp, s: np.ndarray, a: np.ndarray) -> np.ndarray:
        return net.forward(np.concatenate([s, a], axis=1))[..., 0]

    def refit_occupancy(self, buffer: ReplayBuffer, rng: RngStream) -> None:
        states = buffer.sample_states(self.hp.kde_samples, rng)
        self.kde = kde_fit(states, self.hp.kde_bandwidth or "scott")

    # -- one gradient step -------------------------------------------------
    def update_batch(self, batch: dict, rng: RngStream) -> Diagnostics:
        hp = self.hp
        s, a, r, s2, done = batch["s"], batch["a"], batch["r"], batch["s_next"], batch["done"]
        n = s.shape[0]
        gamma, lam, beta = hp.gamma, hp.lam, hp.beta

        # targets from a fresh next action
        a2, _ = self.actor.forward(s2, rng.normal((n, self.act_dim)))
        q_next = self._q(self.targets, s2, a2)
        qr_next, _ = _min_pair(q_next, 0)
        self.last_target_q = q_next
        q = self._q(self.critics, s, a)
        not_done = 1.0 - done
        y_r = r + gamma * not_done * qr_next
        delta_r = q[:2] - y_r  # (2, B)
        l_r_members = 0.5 * lam * delta_r ** 2
        grad_q = np.zeros_like(q)
        grad_q[:2] = lam * delta_r / n
        diag = Diagnostics(loss_r=float(l_r_members.mean(1).sum()))
        bootstrap = [qr_next]
        if self.use_elbo:
            qe_next, _ = _min_pair(q_next, 2)
            bootstrap.append(qe_next)
            log_rho = batch["log_rho"] if "log_rho" in batch else self.kde.log_density(s2)
            l_r = l_r_members.mean(0)  # treated as a constant
            y_e = elbo_target(l_r, log_rho, qe_next, done, gamma, beta, hp.elbo_target_sign)
            delta_e = q[2:] - y_e
            grad_q[2:] = delta_e / n
            diag.loss_elbo = float((0.5 * delta_e ** 2).mean(1).sum())
            diag.mean_log_rho = float(log_rho.mean())
        self.last_bootstrap = np.stack(bootstrap)
        critic_grads, _ = self.critics.backward(grad_q[..., None])
        self.critic_opt.step(self.critics.params, critic_grads)

        # actor step through the updated critics; critic gradients are discarded
        a_new, logp = self.actor.forward(s, rng.normal((n, self.act_dim)))
        q_pi = self._q(self.critics, s, a_new)
        qr_pi, first_r = _min_pair(q_pi, 0)
        g = np.zeros_like(q_pi)
        g[0] = np.where(first_r, -1.0, 0.0) / n
        g[1] = np.where(first_r, 0.0, -1.0) / n
        qe_pi = None
        if self.use_elbo:
            qe_pi, first_e = _min_pair(q_pi, 2)
            g[2] = np.where(first_e, -1.0, 0.0) / n
            g[3] = np.where(first_e, 0.0, -1.0) / n
        diag.loss_actor = float(loss_actor(qr_pi, logp, beta, qe_pi).mean())
        _, d_in = self.critics.backward(g[..., None])
        d_action = d_in[:, self.obs_dim:]
        d_logp = np.full(n, 1.0 / (beta * n))
        actor_grads = self.actor.backward(d_action, d_logp)
        self.actor_opt.step(self.actor.params, actor_grads)

        polyak_update(self.targets.params, self.critics.params, hp.polyak)
        diag.updates = 1
        return diag

    def update_epoch(self, buffer: ReplayBuffer, n_updates: int, rng: RngStream) -> Diagnostics:
        """KDE refit (CCA only) followed by ``n_updates`` batch updates."""
        if buffer.size < max(self.hp.batch_size, 2):
            raise InsufficientDataError(
                f"buffer holds {buffer.size} transitions, need {self.hp.batch_size}")
        if self.use_elbo:
            self.refit_occupancy(buffer, rng)
            # the density is frozen for the epoch, so each buffer row is evaluated once
            log_rho_cache = np.full(buffer.size, np.nan)
        total = Diagnostics()
        for _ in range(n_updates):
            idx = buffer.sample_indices(self.hp.batch_size, rng)
            batch = {"s": buffer.s[idx], "a": buffer.a[idx], "r": buffer.r[idx],
                     "s_next": buffer.s_next[idx], "done": buffer.done[idx]}
            if self.use_elbo:
                missing = np.unique(idx[np.isnan(log_rho_cache[idx])])
                if missing.size:
                    log_rho_cache[missing] = self.kde.log_density(buffer.s_next[missing])
                batch["log_rho"] = log_rho_cache[idx]
            d = self.update_batch(batch, rng)
            total.loss_r += d.loss_r
            total.loss_elbo += d.loss_elbo
            total.loss_actor += d.loss_actor
            total.mean_log_rho += d.mean_log_rho
            total.updates += 1
        if total.updates:
            for name in ("loss_r", "loss_elbo", "loss_actor", "mean_log_rho"):
                setattr(total, name, getattr(total, name) / total.updates)
        return total

    def act(self, s, rng: RngStream | None = None, deterministic: bool = False) -> np.ndarray:
        return self.actor.act(s, rng, deterministic)[0]


class CcaAgent(ActorCriticAgent):
    def __init__(self, obs_dim, act_dim, low, high, hp, rng, use_elbo: bool = True):
        super().__init__(obs_dim, act_dim, low, high, hp, rng, use_elbo=use_elbo)


class SacLiteAgent(ActorCriticAgent):
    def __init__(self, obs_dim, act_dim, low, high, hp, rng):
        super().__init__(obs_dim, act_dim, low, high, hp, rng, use_elbo=False)


def make_agent(method: str, env, hp: Hyperparams, rng: RngStream) -> ActorCriticAgent:
    cls = {"cca": CcaAgent, "saclite": SacLiteAgent}.get(method)
    if cls is None:
        raise ValueError(f"actor-critic method must be 'cca' or 'saclite', got {method!r}")
    return cls(env.obs_dim, env.act_dim, env.action_low, env.action_high, hp, rng)


def update_epoch(agent: ActorCriticAgent, buffer: ReplayBuffer, hp: Hyperparams, rng: RngStream,
                 n_updates: int | None = None) -> Diagnostics:
    n = hp.updates_per_epoch if n_updates is None else n_updates
    return agent.update_epoch(buffer, n if n is not None else 1, rng)


@dataclass
class EpisodeRecord:
    index: int
    env_steps: int
    episode_return: float
    average_reward: float
    cumulative_reward: float
    length: int
    eval_return: float
    diagnostics: dict = field(default_factory=dict)


def run_episode(env, policy, rng: RngStream) -> tuple[float, int]:
    s = env.reset(rng)
    total, done, steps = 0.0, False, 0
    while not done:
        s, r, done = env.step(policy(s))
        total += r
        steps += 1
    return total, steps


def train(agent: ActorCriticAgent, env, hp: Hyperparams, total_steps: int, rng: RngStream,
          log=None, stop=None) -> list[EpisodeRecord]:
    """Collect episodes and update at episode boundaries until ``total_steps`` env steps.

    Before ``hp.warmup_steps`` actions are uniform in the action box. After every
    training episode, ``hp.eval_episodes`` deterministic episodes are run on a
    separate environment instance (not counted in ``total_steps``).
    ``stop(records)`` returning True ends training early.
    """
    env_rng, act_rng, upd_rng, eval_rng = rng.split(4)
    eval_env = type(env)()
    buffer = ReplayBuffer(min(hp.buffer_capacity, max(total_steps, 1)), agent.obs_dim,
                          agent.act_dim)
    records: list[EpisodeRecord] = []
    steps = 0
    cumulative = 0.0
    since_update = 0
    low, high = env.action_low, env.action_high
    while steps < total_steps:
        s = env.reset(env_rng)
        ep_ret, ep_len, done = 0.0, 0, False
        while not done and steps < total_steps:
            if steps < hp.warmup_steps:
                a = act_rng.uniform(low, high)
            else:
                a = agent.act(s, act_rng)
            s2, r, done = env.step(a)
            # time-limit truncation is not a terminal state for bootstrapping
            terminal = bool(getattr(env, "reached_goal", done))
            buffer.push(Transition(s, a, r, s2, terminal))
            s = s2
            ep_ret += r
            ep_len += 1
            steps += 1
            since_update += 1
        cumulative += ep_ret
        diag = {}
        if steps >= hp.warmup_steps and buffer.size >= hp.batch_size:
            n = hp.updates_per_epoch if hp.updates_per_epoch is not None else since_update
            diag = agent.update_epoch(buffer, n, upd_rng).as_dict()
            since_update = 0
        eval_ret = float(np.mean([
            run_episode(eval_env, lambda x: agent.act(x, deterministic=True), eval_rng)[0]
            for _ in range(hp.eval_episodes)]))
        rec = EpisodeRecord(len(records), steps, ep_ret, ep_ret / max(ep_len, 1), cumulative,
                            ep_len, eval_ret, diag)
        records.append(rec)
        if log is not None:
            log(rec)
        if stop is not None and stop(records):
            break
    return records
