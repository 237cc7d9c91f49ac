import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cca.core import RngStream
from cca.envs import E, TwoRoomsEnv
from cca.occupancy import (LOG_FLOOR, LeakyCountModel, TooFewPointsError, UniformPrior,
                           exact_conditional_occupancy, exact_occupancy, kde_fit,
                           kde_log_density, leaky_update, log_density_discrete,
                           monte_carlo_occupancy, occupancy_residual, policy_evaluation_q,
                           return_estimator, scott_bandwidth, total_variation)


def random_mdp(rng, n_s, n_a):
    P = rng.random((n_s, n_a, n_s)) ** 3
    P /= P.sum(-1, keepdims=True)
    pi = rng.random((n_s, n_a))
    pi /= pi.sum(-1, keepdims=True)
    p0 = rng.random(n_s)
    return P, pi, p0 / p0.sum()


# -- leaky counts ----------------------------------------------------------------

def test_leaky_update_example():
    m = leaky_update(LeakyCountModel.uniform(18, 0.005), 5)
    assert m.probs[4] == pytest.approx(0.995 / 18 + 0.005) == pytest.approx(0.060278, abs=1e-6)
    assert m.probs[0] == pytest.approx(0.055278, abs=1e-6)
    assert log_density_discrete(m, 5) == pytest.approx(-2.809, abs=1e-3)


def test_leaky_update_zero_eta_and_limit():
    m0 = LeakyCountModel.uniform(18, 0.0)
    np.testing.assert_array_equal(leaky_update(m0, 3).probs, m0.probs)
    m = LeakyCountModel.uniform(18, 0.1)
    for _ in range(400):
        m.update(5)
    assert m.probs[4] == pytest.approx(1.0, abs=1e-12)


def test_log_density_uniform_and_floor():
    m = LeakyCountModel.uniform(18, 0.005)
    assert log_density_discrete(m, 7) == pytest.approx(-2.8904, abs=1e-4)
    m.probs[:] = 0.0
    m.probs[0] = 1.0
    assert log_density_discrete(m, 2) == LOG_FLOOR == math.log(1e-8)


@settings(max_examples=200)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=20).filter(lambda v: sum(v) > 1e-3),
       st.floats(0.0, 0.99), st.data())
def test_leaky_update_preserves_simplex(weights, eta, data):
    p = np.array(weights) / sum(weights)
    s = data.draw(st.integers(1, len(p)))
    out = leaky_update(LeakyCountModel(p, eta), s).probs
    assert out.sum() == pytest.approx(1.0, abs=1e-12) and np.all(out >= 0)


def test_uniform_prior():
    assert UniformPrior.discrete(18).log_value == pytest.approx(-math.log(18))
    assert UniformPrior.box([-1.2, -0.07], [0.6, 0.07]).log_value == pytest.approx(
        -math.log(1.8 * 0.14))


# -- KDE -------------------------------------------------------------------------

def test_scott_rule():
    assert scott_bandwidth(1000, 2) == pytest.approx(0.3162, abs=1e-4)
    pts = RngStream(0).normal((1000, 2))
    assert kde_fit(pts).bandwidth == pytest.approx(1000 ** (-1 / 6))


def test_kde_single_center_at_mode():
    m = kde_fit(np.array([[0.3], [0.3]]), bandwidth=1.0, standardize=False)
    assert kde_log_density(m, [0.3]) == pytest.approx(-0.9189, abs=1e-4)


def test_kde_two_centers():
    m = kde_fit(np.array([[-1.0], [1.0]]), bandwidth=1.0, standardize=False)
    assert math.exp(kde_log_density(m, [0.0])) == pytest.approx(0.2420, abs=1e-4)
    assert kde_log_density(m, [0.0]) == pytest.approx(-1.4189, abs=1e-4)
    std = kde_fit(np.array([[-1.0], [1.0]]))
    assert kde_log_density(std, [0.4]) == pytest.approx(kde_log_density(std, [-0.4]), abs=1e-14)


def test_kde_far_query_is_finite():
    m = kde_fit(RngStream(1).normal((50, 2)))
    v = kde_log_density(m, [1e3, -1e3])
    assert np.isfinite(v) and v < -1e4


def test_kde_identical_points_floor():
    m = kde_fit(np.ones((10, 2)))
    assert np.all(m.scale == 1e-6) and np.isfinite(kde_log_density(m, [1.0, 1.0]))


def test_kde_too_few_points():
    with pytest.raises(TooFewPointsError):
        kde_fit(np.zeros((1, 2)))


def test_kde_batch_matches_single():
    rng = RngStream(2)
    m = kde_fit(rng.normal((40, 2)))
    q = rng.normal((5, 2))
    batch = m.log_density(q)
    np.testing.assert_allclose(batch, [kde_log_density(m, x) for x in q], rtol=1e-13)


def kde_grid_integral(d, rng):
    pts = rng.normal((500, d)) * np.array([2.0, 0.5][:d]) + 1.0
    m = kde_fit(pts)
    lo, hi = pts.min(0) - 3, pts.max(0) + 3
    if d == 1:
        g = np.linspace(lo[0], hi[0], 4001)
        return np.trapezoid(np.exp(m.log_density(g[:, None])), g)
    gx = np.linspace(lo[0], hi[0], 401)
    gy = np.linspace(lo[1], hi[1], 401)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    dens = np.exp(m.log_density(np.stack([X.ravel(), Y.ravel()], 1))).reshape(X.shape)
    return np.trapezoid(np.trapezoid(dens, gy, axis=1), gx)


@pytest.mark.parametrize("d", [1, 2])
def test_kde_normalizes(d):
    assert kde_grid_integral(d, RngStream(d)) == pytest.approx(1.0, abs=1e-2)


# -- exact occupancy ---------------------------------------------------------------

def test_single_absorbing_state():
    np.testing.assert_allclose(exact_occupancy(np.ones((1, 1, 1)), [[1.0]], 0.9, [1.0]), [1.0])


def test_two_state_chain():
    P = np.array([[[0.0, 1.0]], [[0.0, 1.0]]])
    g = 0.7
    np.testing.assert_allclose(exact_occupancy(P, np.ones((2, 1)), g, [1.0, 0.0]), [1 - g, g])
    np.testing.assert_allclose(exact_conditional_occupancy(P, np.ones((2, 1)), g, 0, 0), [0, 1])


def test_conditional_equals_unconditional_when_p0_matches():
    P, pi, _ = random_mdp(RngStream(3), 5, 2)
    np.testing.assert_allclose(exact_conditional_occupancy(P, pi, 0.9, 2, 1),
                               exact_occupancy(P, pi, 0.9, P[2, 1]), atol=1e-14)


def test_gamma_one_rejected():
    P, pi, p0 = random_mdp(RngStream(3), 3, 2)
    with pytest.raises(ValueError, match="gamma must be < 1"):
        exact_occupancy(P, pi, 1.0, p0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.sampled_from([0.0, 0.5, 0.9, 0.99]),
       st.integers(0, 10_000))
def test_occupancy_fixed_point_and_simplex(n_s, n_a, gamma, seed):
    P, pi, p0 = random_mdp(RngStream(seed), n_s, n_a)
    rho = exact_occupancy(P, pi, gamma, p0)
    assert rho.sum() == pytest.approx(1.0, abs=1e-10) and np.all(rho >= -1e-12)
    assert occupancy_residual(rho, P, pi, gamma, p0) < 1e-12


def test_tworooms_uniform_policy_vs_monte_carlo():
    P = TwoRoomsEnv().transition_tensor()
    pi = np.full((18, 4), 0.25)
    p0 = np.eye(18)[0]
    rng = RngStream(10)
    rho = exact_occupancy(P, pi, 0.99, p0)
    assert total_variation(rho, monte_carlo_occupancy(P, pi, 0.99, p0, 1_000_000, rng)) <= 0.01
    cond = exact_conditional_occupancy(P, pi, 0.99, 0, E)
    assert total_variation(cond, monte_carlo_occupancy(P, pi, 0.99, P[0, E], 1_000_000, rng)) <= 0.01


@pytest.mark.parametrize("r,g,expected", [(1.0, 0.99, 100.0), (0.0, 0.5, 0.0),
                                          (-0.025, 0.99, -2.5)])
def test_return_estimator(r, g, expected):
    assert return_estimator(r, g) == pytest.approx(expected)


def test_q_from_occupancy_matches_bellman():
    rng = RngStream(12)
    P, pi, _ = random_mdp(rng, 4, 3)
    r = rng.normal((4, 3))
    g = 0.9
    Q = policy_evaluation_q(P, pi, g, r)
    # independent oracle: iterate Q = P (pi * (r + ... )) to convergence
    V = np.zeros(4)
    for _ in range(2000):
        V = (pi * (r + g * P @ V)).sum(1)
    np.testing.assert_allclose(Q, P @ V, atol=1e-10)
    rbar = (pi * r).sum(1)
    for s in range(4):
        for a in range(3):
            chain = exact_conditional_occupancy(P, pi, g, s, a) @ rbar / (1 - g)
            assert chain == pytest.approx(Q[s, a], abs=1e-8)
