import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cca.core import Hyperparams, RngStream
from cca.envs import TwoRoomsEnv
from cca.occupancy import LeakyCountModel
from cca.tabular import (QTables, cca_trial_update, elbo_sample, final_state_entropy,
                         greedy_action, qlearning_trial_update, rollout_epsilon_greedy,
                         rollout_softmax, run_discrete_experiment, softmax_policy)

PATH = [1, 7, 8, 9, 10, 16, 17, 18]
ACTS = [1, 0, 0, 0, 1, 0, 0]


def test_softmax_examples():
    np.testing.assert_allclose(softmax_policy(np.zeros(4), 7.0), 0.25)
    np.testing.assert_allclose(softmax_policy(np.array([1.0, 0.0]), 1.0),
                               [math.e / (math.e + 1), 1 / (math.e + 1)])
    assert softmax_policy(np.array([1.0, 0, 0, 0]), 100.0)[0] > 1 - 1e-8


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=6), st.floats(0.01, 100),
       st.floats(-1e3, 1e3))
def test_softmax_shift_invariant_and_normalized(q, beta, c):
    q = np.array(q)
    p = softmax_policy(q, beta)
    assert p.sum() == pytest.approx(1.0) and np.all(np.isfinite(p))
    np.testing.assert_allclose(p, softmax_policy(q + c, beta), atol=1e-9)


def test_elbo_examples():
    t = QTables.zeros(18, 4)
    assert elbo_sample(t, 0, 0, 0.1) == 0.0
    t.Q[0, 0] = 1.0
    assert elbo_sample(t, 0, 0, 0.1) == pytest.approx(-0.05)
    t.Q_S[0, 0] = 2.89
    assert elbo_sample(t, 0, 0, 0.0) == pytest.approx(2.89)


def test_cca_update_q_s_hand_trace_without_prior_baseline():
    hp = Hyperparams(alpha=0.3, beta=1.0, lam=0.0, prior_baseline=False)
    t = QTables.zeros(18, 4)
    cca_trial_update(t, PATH, ACTS, 1.0, LeakyCountModel.uniform(18, 0.005), hp)
    for s, a in zip(PATH[:-1], ACTS):
        assert t.Q_S[s - 1, a] == pytest.approx(0.3 * math.log(18)) == pytest.approx(0.8671, abs=1e-4)
        assert t.Q_R[s - 1, a] == pytest.approx(0.3)


def test_cca_update_with_prior_baseline_uniform_rho_is_neutral():
    hp = Hyperparams(alpha=0.3, beta=1.0, lam=0.0)
    t = QTables.zeros(18, 4)
    rho = LeakyCountModel.uniform(18, 0.005)
    cca_trial_update(t, PATH, ACTS, 0.0, rho, hp)
    np.testing.assert_allclose(t.Q_S, 0.0, atol=1e-15)
    np.testing.assert_allclose(t.Q, 0.0, atol=1e-15)
    assert rho.probs[17] == pytest.approx(0.995 / 18 + 0.005)


def test_cca_update_net_effect_uniform_policy():
    hp = Hyperparams(alpha=0.3, beta=2.0, lam=0.0, prior_baseline=False)
    t = QTables.zeros(18, 4)
    cca_trial_update(t, PATH[:2], ACTS[:1], 0.0, LeakyCountModel.uniform(18, 0.005), hp)
    e = 0.3 * math.log(18)
    assert t.Q[0, 1] == pytest.approx(0.3 / 2.0 * 0.75 * e)
    np.testing.assert_allclose(t.Q[0, [0, 2, 3]], -0.3 / 2.0 * 0.25 * e)


def test_zero_elbo_leaves_q_row():
    hp = Hyperparams(alpha=0.3, beta=1.0, lam=0.0)
    t = QTables.zeros(18, 4)
    t.Q[0] = [0.3, -0.1, 0.2, 0.0]
    before = t.Q.copy()
    cca_trial_update(t, PATH[:2], ACTS[:1], 0.0, LeakyCountModel.uniform(18, 0.005), hp)
    # -log(1/18) - log 18 cancels only up to rounding
    np.testing.assert_allclose(t.Q, before, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.floats(0.1, 100.0))
def test_elbo_lines_sum_to_zero(seed, lam, beta):
    rng = RngStream(seed)
    t = QTables(rng.normal((18, 4)), rng.normal((18, 4)), rng.normal((18, 4)))
    hp = Hyperparams(alpha=0.3, beta=beta, lam=lam)
    rho = LeakyCountModel.uniform(18, 0.005)
    states, acts = [1, 2], [0]
    # the lambda line moves only the chosen entry; every other entry's change is pi-weighted
    q_before = t.Q[0].copy()
    q_r_new = 0.7 * t.Q_R[0, 0] + 0.3 * 1.0
    q_after_lam = q_before.copy()
    q_after_lam[0] = (1 - 0.3 * lam) * q_before[0] + 0.3 * lam * q_r_new
    cca_trial_update(t, states, acts, 1.0, rho, hp)
    assert (t.Q[0] - q_after_lam).sum() == pytest.approx(0.0, abs=1e-9)


def test_qlearning_first_backup():
    hp = Hyperparams(alpha=0.03, gamma=0.99)
    Q = np.zeros((18, 4))
    qlearning_trial_update(Q, PATH, ACTS, 1.0, hp)
    assert Q[16, 0] == pytest.approx(0.03)
    assert np.count_nonzero(Q) == 1


def test_greedy_ties_uniform():
    q = np.array([1.0, 1.0, 0.0, 1.0])
    picks = {greedy_action(q, u) for u in np.linspace(0, 0.999, 30)}
    assert picks == {0, 1, 3}


def test_epsilon_one_is_uniform():
    env = TwoRoomsEnv()
    Q = np.zeros((18, 4))
    Q[:, 0] = 10.0
    rng = RngStream(0)
    acts = np.concatenate([rollout_epsilon_greedy(env, Q, 1.0, rng)[1] for _ in range(2000)])
    freq = np.bincount(acts, minlength=4) / len(acts)
    np.testing.assert_allclose(freq, 0.25, atol=0.02)


def test_rollouts_are_chains():
    env = TwoRoomsEnv()
    rng = RngStream(1)
    states, actions, r = rollout_softmax(env, np.zeros((18, 4)), 1.0, rng)
    assert states[0] == 1 and len(states) == 8 and len(actions) == 7
    from cca.envs import tworooms_transition
    assert all(tworooms_transition(s, a) == s2 for s, a, s2 in zip(states, actions, states[1:]))
    assert r == (1.0 if states[-1] == 18 else 0.0)


def test_run_experiment_edge_cases():
    env = TwoRoomsEnv()
    hp = Hyperparams()
    assert run_discrete_experiment(env, "cca", hp, 0, RngStream(0)) == []
    a = run_discrete_experiment(env, "cca", hp, 50, RngStream(4))
    b = run_discrete_experiment(env, "cca", hp, 50, RngStream(4))
    assert a == b
    with pytest.raises(ValueError):
        run_discrete_experiment(env, "sarsa", hp, 1, RngStream(0))


def test_final_state_entropy():
    assert final_state_entropy(list(range(1, 19))) == pytest.approx(math.log(18))
    assert final_state_entropy([5] * 10) == 0.0
