"""MLP: finite-difference gradient oracle, XOR capacity, determinism."""

import numpy as np
import pytest

from bytegrams.errors import ConfigError, TrainingError
from bytegrams.learners.mlp import MlpModel, _loss_and_grad, train_mlp

from _oracles import central_difference_gradient, mlp_forward_loops

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Z = np.array([-1, 1, 1, -1])


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(40):
        n = int(rng.integers(3, 12))
        m = int(rng.integers(1, 5))
        h = int(rng.integers(1, 6))
        alpha = float(rng.choice([0.0, 1e-5, 1e-2]))
        X = rng.normal(size=(n, m))
        z = rng.choice([-1.0, 1.0], size=n)
        y = (z + 1.0) / 2.0
        x = rng.normal(size=m * h + h + h + 1) * 0.7

        _, analytic = _loss_and_grad(x, X, z, y, alpha, m, h)
        numeric = central_difference_gradient(
            lambda v: _loss_and_grad(v, X, z, y, alpha, m, h)[0], x)
        denom = max(float(np.linalg.norm(analytic)),
                    float(np.linalg.norm(numeric)), 1e-8)
        rel = float(np.linalg.norm(analytic - numeric)) / denom
        worst = max(worst, rel)
    assert worst <= 1e-4, f"worst relative gradient error {worst}"


def test_xor_reaches_perfect_training_accuracy():
    m = train_mlp(XOR_X, XOR_Z, hidden=4, alpha=1e-5, seed=0, max_iter=500)
    assert np.array_equal(m.predict(XOR_X), XOR_Z)
    assert m.n_iter <= 500


def test_zero_weights_score_is_output_bias():
    m = MlpModel(np.zeros((3, 5)), np.zeros(5), np.zeros(5), 0.25,
                 alpha=1e-5, seed=0, max_iter=1)
    assert m.scores(np.random.default_rng(1).normal(size=(4, 3))).tolist() \
        == [0.25] * 4


def test_score_monotone_in_output_bias():
    rng = np.random.default_rng(101)
    W1 = rng.normal(size=(3, 4))
    b1 = rng.normal(size=4)
    w2 = rng.normal(size=4)
    Q = rng.normal(size=(6, 3))
    lo = MlpModel(W1, b1, w2, -1.0, 1e-5, 0, 1).scores(Q)
    hi = MlpModel(W1, b1, w2, 2.0, 1e-5, 0, 1).scores(Q)
    assert np.all(hi - lo == pytest.approx(3.0))


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(102)
    for _ in range(10):
        m_dim = int(rng.integers(1, 5))
        h = int(rng.integers(1, 6))
        W1 = rng.normal(size=(m_dim, h))
        b1 = rng.normal(size=h)
        w2 = rng.normal(size=h)
        b2 = float(rng.normal())
        model = MlpModel(W1, b1, w2, b2, 1e-5, 0, 1)
        Q = rng.normal(size=(7, m_dim))
        want = mlp_forward_loops(W1.tolist(), b1.tolist(), w2.tolist(),
                                 b2, Q.tolist())
        assert np.allclose(model.scores(Q), want, rtol=1e-12, atol=1e-12)


def test_loss_history_non_increasing():
    rng = np.random.default_rng(103)
    X = np.vstack([rng.normal(size=(20, 3)) + 1.5,
                   rng.normal(size=(20, 3)) - 1.5])
    z = np.array([1] * 20 + [-1] * 20)
    m = train_mlp(X, z, hidden=8, seed=1, max_iter=100)
    h = m.loss_history
    assert len(h) >= 2
    assert all(h[i + 1] <= h[i] + 1e-12 for i in range(len(h) - 1))
    assert float(np.mean(m.predict(X) == z)) == 1.0


def test_non_finite_loss_reports_evaluation():
    X = np.array([[1e308, 1e308], [-1e308, -1e308]])
    z = np.array([1, -1])
    with pytest.raises(TrainingError, match="evaluation"):
        train_mlp(X, z, hidden=4, seed=0)


def test_determinism_and_state_round_trip():
    rng = np.random.default_rng(104)
    X = np.vstack([rng.normal(size=(15, 4)) + 1.0,
                   rng.normal(size=(15, 4)) - 1.0])
    z = np.array([1] * 15 + [-1] * 15)
    a = train_mlp(X, z, hidden=6, seed=9, max_iter=60)
    b = train_mlp(X, z, hidden=6, seed=9, max_iter=60)
    assert np.array_equal(a.W1, b.W1) and a.b2 == b.b2
    assert a.loss_history == b.loss_history
    back = MlpModel.from_state(a.state_doc())
    Q = rng.normal(size=(10, 4))
    assert np.array_equal(a.scores(Q), back.scores(Q))


def test_validation_errors():
    X = np.zeros((4, 2))
    z = np.array([1, -1, 1, -1])
    with pytest.raises(ConfigError):
        train_mlp(X, z, hidden=0)
    with pytest.raises(ConfigError):
        train_mlp(X, z, alpha=-1.0)
    with pytest.raises(ConfigError):
        train_mlp(X, z, max_iter=0)
    with pytest.raises(ConfigError):
        train_mlp(X, np.array([1, 1, 0, -1]))
    m = train_mlp(X, z, hidden=2, max_iter=5)
    with pytest.raises(ConfigError):
        m.scores(np.zeros((2, 3)))
