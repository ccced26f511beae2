"""Linear-algebra core: objective, gradient, rank-one maintenance."""

import math

import numpy as np
import pytest

from tylerfw import linalg
from tylerfw.dataset import Dataset, GeneratorConfig, generate, normalize
from tylerfw.errors import DenominatorNonPositive, PositiveDefinitenessLost


def _state(p, n, seed=0, q=None):
    data = generate(GeneratorConfig(p=p, n=n, seed=seed))
    return linalg.SolverState.initialize(data, q0=q)


def _random_spd(p, rng, trace=None):
    a = rng.standard_normal((p, p))
    q = a @ a.T + p * np.eye(p)
    if trace is not None:
        q *= trace / np.trace(q)
    return q


def test_objective_hand_value():
    # Two points in R^2 against diag(1.5, 0.5): f = log(2/3).
    pts = np.array([[1.0, 1.0 / math.sqrt(2)],
                    [0.0, 1.0 / math.sqrt(2)]])
    data = Dataset(pts)
    q = np.diag([1.5, 0.5])
    state = linalg.SolverState.initialize(data, q0=q)
    assert linalg.objective_value(state) == pytest.approx(math.log(2.0 / 3.0),
                                                          abs=1e-14)


def test_objective_scale_invariance():
    state = _state(6, 40, seed=3)
    f1 = linalg.objective_value(state)
    state2 = linalg.SolverState.initialize(state.data, q0=7.3 * state.q)
    assert linalg.objective_value(state2) == pytest.approx(f1, abs=1e-10)


def test_objective_reductions_agree():
    state = _state(8, 3000, seed=1)
    seq = linalg.objective_value(state, reduction="sequential")
    chk = linalg.objective_value(state, reduction="chunked")
    assert seq == pytest.approx(chk, rel=1e-13)


def test_logdet_matches_slogdet():
    rng = np.random.default_rng(0)
    q = _random_spd(7, rng)
    assert linalg.logdet_spd(q) == pytest.approx(np.linalg.slogdet(q)[1],
                                                 rel=1e-12)


def test_spd_inverse_and_sqrt():
    rng = np.random.default_rng(1)
    q = _random_spd(9, rng)
    qi = linalg.spd_inverse(q)
    assert np.linalg.norm(q @ qi - np.eye(9)) < 1e-10
    s = linalg.spd_sqrt(q)
    assert np.linalg.norm(s @ s - q) < 1e-9 * np.linalg.norm(q)
    with pytest.raises(PositiveDefinitenessLost):
        linalg.spd_sqrt(np.diag([1.0, -1e-3]))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    state = _state(5, 50, seed=2)
    g = linalg.gradient_dense(state)
    eps = 1e-6
    for _ in range(10):
        d = rng.standard_normal((5, 5))
        d = 0.5 * (d + d.T)
        sp = linalg.SolverState.initialize(state.data, q0=state.q + eps * d)
        sm = linalg.SolverState.initialize(state.data, q0=state.q - eps * d)
        fd = (linalg.objective_value(sp) - linalg.objective_value(sm)) / (2 * eps)
        assert np.sum(g * d) == pytest.approx(fd, rel=1e-5)


def test_gradient_orthogonal_to_iterate():
    # <Q, grad f(Q)> = 0 identically on the trace-p manifold.
    for seed in range(5):
        rng = np.random.default_rng(seed)
        q = _random_spd(6, rng, trace=6.0)
        state = _state(6, 60, seed=seed, q=q)
        g = linalg.gradient_dense(state)
        assert abs(np.sum(state.q * g)) < 1e-10


def test_gradient_matvec_matches_dense():
    state = _state(7, 80, seed=4)
    g = linalg.gradient_dense(state)
    rng = np.random.default_rng(11)
    for _ in range(5):
        v = rng.standard_normal(7)
        assert np.allclose(linalg.gradient_matvec(state, v), g @ v,
                           rtol=1e-12, atol=1e-12)


def test_rank_one_inverse_update_identity():
    # Sherman-Morrison against a direct inverse of (1-mu)Q + mu vv^T.
    rng = np.random.default_rng(5)
    q = _random_spd(6, rng, trace=6.0)
    q_inv = np.linalg.inv(q)
    v = rng.standard_normal(6)
    v *= math.sqrt(6) / np.linalg.norm(v)
    for mu in (0.2, -0.15, 0.45):
        gamma = mu / (1.0 - mu)
        upd = linalg.rank_one_inverse_update(q_inv, v, mu, gamma)
        direct = np.linalg.inv((1.0 - mu) * q + mu * np.outer(v, v))
        assert np.linalg.norm(upd - direct) < 1e-10


def test_rank_one_inverse_update_rejects_degenerate():
    rng = np.random.default_rng(6)
    q = _random_spd(4, rng)
    q_inv = np.linalg.inv(q)
    v = rng.standard_normal(4)
    with pytest.raises(DenominatorNonPositive):
        linalg.rank_one_inverse_update(q_inv, v, 1.0, 1e300)


def test_cached_y_update_tracks_inverse():
    state = _state(6, 40, seed=8)
    rng = np.random.default_rng(9)
    v = rng.standard_normal(6)
    v *= math.sqrt(6) / np.linalg.norm(v)
    mu = 0.3
    gamma = mu / (1.0 - mu)
    linalg.update_cached_y(state, v, mu, gamma)
    state.q_inv = linalg.rank_one_inverse_update(state.q_inv, v, mu, gamma)
    state.q = (1.0 - mu) * state.q + mu * np.outer(v, v)
    assert np.linalg.norm(state.y - state.q_inv @ state.data.points) < 1e-10


def test_refresh_state_restores_exactness():
    state = _state(5, 30, seed=10)
    state.q_inv += 1e-3  # corrupt
    linalg.refresh_state(state)
    assert np.linalg.norm(state.q @ state.q_inv - np.eye(5), "fro") < 1e-12
    assert np.linalg.norm(state.y - state.q_inv @ state.data.points) < 1e-12


def test_point_weights_positive():
    state = _state(6, 60, seed=12)
    w = linalg.point_weights(state)
    assert w.shape == (60,)
    assert np.all(w > 0)
