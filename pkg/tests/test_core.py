import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from cca.core import (Hyperparams, InsufficientDataError, ReplayBuffer, RngStream, Trajectory,
                      Transition, buffer_push, buffer_sample_batch, buffer_sample_states)


def tr(i, done=False):
    return Transition(np.array([float(i)]), np.array([0.0]), float(i), np.array([i + 1.0]), done)


def test_rng_same_seed_same_stream():
    assert np.array_equal(RngStream(3).random(10), RngStream(3).random(10))
    assert not np.array_equal(RngStream(3).random(10), RngStream(4).random(10))


def test_rng_split_is_pure_and_independent():
    r = RngStream(9)
    a1, b1 = r.split(2)
    a2, _ = r.split(2)
    x = a1.random(5)
    assert np.array_equal(x, a2.random(5))
    assert not np.array_equal(x, b1.random(5))


def test_rng_copy_replays():
    r = RngStream(1)
    r.random(3)
    c = r.copy()
    assert np.array_equal(r.normal(4), c.normal(4))


def test_transition_rejects_nonfinite_reward():
    with pytest.raises(ValueError):
        Transition(0, 0, float("nan"), 1, False)


def test_trajectory_chain():
    t = Trajectory()
    t.append(Transition(1, 0, 0.0, 2, False))
    t.append(Transition(2, 1, 0.0, 8, True))
    assert t.states == [1, 2, 8] and t.actions == [0, 1] and t.is_chain_consistent()
    with pytest.raises(ValueError):
        t.append(Transition(3, 0, 0.0, 4, False))


def test_push_counts_and_fifo():
    b = ReplayBuffer(2, 1, 1)
    buffer_push(b, tr(1))
    assert b.size == 1
    buffer_push(b, tr(2))
    buffer_push(b, tr(3))
    assert sorted(b.r.tolist()) == [2.0, 3.0]


def test_ring_wraps():
    b = ReplayBuffer(100_000, 1, 1)
    t = tr(0)
    for _ in range(100_000):
        b.push(t)
    assert b.size == 100_000 and b.cursor == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(0, 60))
def test_buffer_keeps_last_capacity_pushes(cap, k):
    b = ReplayBuffer(cap, 1, 1)
    for i in range(k):
        b.push(tr(i))
    assert b.size == min(k, cap)
    assert sorted(b.r[:b.size].tolist()) == [float(i) for i in range(max(0, k - cap), k)]


def test_sample_single_transition_repeats():
    b = ReplayBuffer(5, 1, 1)
    b.push(tr(7))
    batch = buffer_sample_batch(b, 3, RngStream(0))
    assert len(batch) == 3 and all(x.r == 7.0 for x in batch)


def test_sample_batch_deterministic():
    b = ReplayBuffer(50, 1, 1)
    for i in range(50):
        b.push(tr(i))
    x = b.sample_batch(16, RngStream(5))
    y = b.sample_batch(16, RngStream(5))
    assert all(np.array_equal(x[k], y[k]) for k in x)


def test_sample_insufficient():
    with pytest.raises(InsufficientDataError):
        ReplayBuffer(5, 1, 1).sample_batch(2, RngStream(0))


def test_sample_indices_uniform_chi_squared():
    b = ReplayBuffer(100, 1, 1)
    for i in range(100):
        b.push(tr(i))
    idx = b.sample_indices(100_000, RngStream(123))
    counts = np.bincount(idx, minlength=100)
    assert chisquare(counts).pvalue > 0.01


def test_sample_states_capped_and_distinct():
    b = ReplayBuffer(10, 1, 1)
    for i in range(3):
        b.push(tr(i))
    got = buffer_sample_states(b, 1000, RngStream(0))
    assert sorted(got[:, 0].tolist()) == [1.0, 2.0, 3.0]
    big = ReplayBuffer(5000, 1, 1)
    for i in range(5000):
        big.push(tr(i))
    s = big.sample_states(1000, RngStream(0))
    assert s.shape == (1000, 1) and len(np.unique(s)) == 1000


def test_sample_states_empty():
    with pytest.raises(InsufficientDataError):
        ReplayBuffer(3, 1, 1).sample_states(1, RngStream(0))


@pytest.mark.parametrize("kw,msg", [({"gamma": 1.0}, "gamma must be < 1"),
                                    ({"eta": 1.5}, "eta"), ({"beta": 0.0}, "beta"),
                                    ({"elbo_target_sign": "x"}, "elbo_target_sign")])
def test_hyperparams_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        Hyperparams(**kw)


def test_sign_flag_alias():
    assert Hyperparams(elbo_target_sign="paper").elbo_target_sign == "verbatim"
