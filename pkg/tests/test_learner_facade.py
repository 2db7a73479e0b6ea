"""Dispatch, config validation, and model-file round trips."""

import numpy as np
import pytest

from bytegrams.errors import ConfigError, FormatError
from bytegrams.learners import (
    LearnerConfig,
    default_configs,
    load_model,
    save_model,
    train,
)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(110)
    X = np.vstack([rng.normal(size=(15, 4)) + 1.2,
                   rng.normal(size=(15, 4)) - 1.2])
    z = np.array([1] * 15 + [-1] * 15)
    return X, z


def test_default_configs_cover_all_variants(data):
    X, z = data
    configs = default_configs()
    assert [c.variant for c in configs] == [
        "knn", "linear_svm", "random_forest", "mlp"]
    for cfg in configs:
        model = train(cfg, X, z, seed=1)
        assert model.variant == cfg.variant
        assert model.feature_dim == 4
        s = model.scores(X)
        p = model.predict(X)
        assert s.shape == p.shape == (30,)
        assert set(np.unique(p)) <= {-1, 1}


def test_predict_consistent_with_score_threshold(data):
    X, z = data
    for cfg in default_configs():
        model = train(cfg, X, z, seed=1)
        thresh = 0.5 if cfg.variant == "random_forest" else 0.0
        s = model.scores(X)
        assert np.array_equal(model.predict(X), np.where(s > thresh, 1, -1))


def test_batch_predict_equals_single(data):
    X, z = data
    for cfg in default_configs():
        model = train(cfg, X, z, seed=1)
        batch = model.predict(X[:5])
        singles = [model.predict(X[i:i + 1])[0] for i in range(5)]
        assert batch.tolist() == singles


def test_config_validation():
    with pytest.raises(ConfigError, match="unknown learner variant"):
        LearnerConfig("boosted", {}).validate()
    with pytest.raises(ConfigError, match="unknown parameters"):
        LearnerConfig("knn", {"neighbors": 5}).validate()
    with pytest.raises(ConfigError):
        train(LearnerConfig("svm", {}), np.zeros((2, 1)),
              np.array([1, -1]))


def test_model_file_round_trips(tmp_path, data):
    X, z = data
    Q = np.random.default_rng(111).normal(size=(8, 4))
    for cfg in default_configs():
        model = train(cfg, X, z, seed=5)
        path = tmp_path / f"{cfg.variant}.json"
        save_model(model, path)
        back = load_model(path)
        assert back.variant == model.variant
        assert np.array_equal(model.scores(Q), back.scores(Q))


def test_model_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "format": "bytegrams-model",\n broken\n}\n')
    with pytest.raises(FormatError, match="line 3"):
        load_model(bad)
    other = tmp_path / "other.json"
    other.write_text('{"format": "something-else"}\n')
    with pytest.raises(FormatError, match="not a"):
        load_model(other)
    wrong_version = tmp_path / "v9.json"
    wrong_version.write_text(
        '{"format": "bytegrams-model", "version": 9}\n')
    with pytest.raises(FormatError, match="version"):
        load_model(wrong_version)
