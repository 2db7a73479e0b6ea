"""kNN against an exhaustive-sort oracle."""

import numpy as np
import pytest

from bytegrams.errors import ConfigError
from bytegrams.learners.knn import KNNModel, train_knn


def oracle_scores(Xtr, z, Q, k):
    """Per-query exhaustive sort of (squared distance, train index)."""
    out = []
    for q in Q:
        d2 = [float(np.sum((x - q) ** 2)) for x in Xtr]
        order = sorted(range(len(Xtr)), key=lambda i: (d2[i], i))
        out.append(sum(int(z[i]) for i in order[:k]) / k)
    return np.array(out)


def test_frozen_single_neighbor():
    m = train_knn(np.array([[0.0], [10.0]]), np.array([-1, 1]), k=1)
    assert m.predict(np.array([[1.0]])).tolist() == [-1]
    assert m.scores(np.array([[9.0]])).tolist() == [1.0]


def test_frozen_score_is_mean_of_k_labels():
    X = np.array([[0.0], [1.0], [2.0]])
    z = np.array([1, -1, 1])
    m = train_knn(X, z, k=3)
    assert m.scores(np.array([[0.0]]))[0] == pytest.approx(1 / 3)


def test_zero_score_predicts_benign():
    m = train_knn(np.array([[0.0], [10.0]]), np.array([-1, 1]), k=2)
    s = m.scores(np.array([[5.0]]))
    assert s.tolist() == [0.0]
    assert m.predict(np.array([[5.0]])).tolist() == [-1]


def test_distance_tie_prefers_lower_train_index():
    X = np.array([[0.0], [2.0]])
    for z in ([-1, 1], [1, -1]):
        m = train_knn(X, np.array(z), k=1)
        assert m.scores(np.array([[1.0]]))[0] == z[0]


def test_duplicate_training_rows_tie_by_index():
    X = np.array([[3.0, 3.0], [3.0, 3.0], [3.0, 3.0], [9.0, 9.0]])
    z = np.array([1, -1, -1, 1])
    m = train_knn(X, z, k=2)
    # both nearest are the duplicates with lowest indices: rows 0 and 1
    assert m.scores(np.array([[3.0, 3.0]]))[0] == 0.0


def test_matches_oracle_on_random_sets():
    rng = np.random.default_rng(70)
    for trial in range(30):
        n = int(rng.integers(5, 60))
        dim = int(rng.integers(1, 5))
        X = rng.normal(size=(n, dim))
        # fold in duplicates to exercise exact ties
        dup = int(rng.integers(0, min(5, n)))
        if dup:
            X[:dup] = X[n - dup:]
        z = rng.choice([-1, 1], size=n)
        Q = rng.normal(size=(int(rng.integers(1, 20)), dim))
        for k in (1, 3, 5):
            if k > n:
                continue
            m = train_knn(X, z, k=k)
            got = m.scores(Q)
            want = oracle_scores(X, z, Q, k)
            assert np.array_equal(got, want), f"trial {trial} k={k}"
            assert np.array_equal(m.predict(Q), np.where(want > 0, 1, -1))


def test_integer_grid_exactness():
    rng = np.random.default_rng(71)
    X = rng.integers(-5, 6, size=(40, 3)).astype(np.float64)
    z = rng.choice([-1, 1], size=40)
    Q = rng.integers(-5, 6, size=(25, 3)).astype(np.float64)
    m = train_knn(X, z, k=5)
    assert np.array_equal(m.scores(Q), oracle_scores(X, z, Q, 5))


def test_k_equals_train_size():
    X = np.array([[0.0], [1.0], [2.0]])
    z = np.array([1, 1, -1])
    m = train_knn(X, z, k=3)
    assert m.scores(np.array([[100.0]]))[0] == pytest.approx(1 / 3)


def test_validation_errors():
    X = np.array([[0.0], [1.0]])
    z = np.array([1, -1])
    with pytest.raises(ConfigError):
        train_knn(X, z, k=0)
    with pytest.raises(ConfigError):
        train_knn(X, z, k=3)
    with pytest.raises(ConfigError):
        train_knn(X, np.array([1, 2]), k=1)
    m = train_knn(X, z, k=1)
    with pytest.raises(ConfigError):
        m.scores(np.array([[1.0, 2.0]]))


def test_state_round_trip():
    rng = np.random.default_rng(72)
    X = rng.normal(size=(20, 4))
    z = rng.choice([-1, 1], size=20)
    m = train_knn(X, z, k=5)
    back = KNNModel.from_state(m.state_doc())
    Q = rng.normal(size=(10, 4))
    assert np.array_equal(m.scores(Q), back.scores(Q))
