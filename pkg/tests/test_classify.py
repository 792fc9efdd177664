import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkdsent import classify, selection
from qkdsent.classify import MlpModel, TrainConfig
from qkdsent.errors import TrainingError


def _zero_model(k=4, c=9):
    m = classify.init_model(k, c, seed=0)
    for w in m.weights:
        w[:] = 0.0
    return m


def _away_from_kinks(model, x, margin=1e-3):
    """True when no hidden pre-activation lies within ``margin`` of zero."""
    X = model.preprocess(np.asarray(x, dtype=float))
    pre, _ = classify._forward_cache(model, X)
    return all(np.min(np.abs(z)) > margin for z in pre[:-1])


def test_zero_weights_uniform():
    p = classify.forward(_zero_model(), [0.3, None, -2.0, 5.0])
    assert p == pytest.approx(np.full(9, 1 / 9), abs=1e-15)


def test_hand_built_toy_network():
    m = MlpModel(layer_sizes=(2, 2, 2),
                 weights=[np.array([[1.0, -1.0], [2.0, 0.5]]), np.array([[1.0, 0.0], [-1.0, 2.0]])],
                 biases=[np.array([0.1, -0.2]), np.array([0.0, 0.3])])
    x = np.array([0.5, -0.25])
    h = np.maximum(np.array([0.5 * 1 + -0.25 * 2 + 0.1, 0.5 * -1 + -0.25 * 0.5 - 0.2]), 0)
    z = np.array([h[0] * 1 + h[1] * -1, h[0] * 0 + h[1] * 2 + 0.3])
    e = np.exp(z - z.max())
    assert classify.forward(m, x) == pytest.approx(e / e.sum(), abs=1e-12)


def test_missing_imputed_as_zero():
    m = classify.init_model(3, 4, seed=2)
    assert np.array_equal(classify.forward(m, [1.0, None, 2.0]),
                          classify.forward(m, [1.0, 0.0, 2.0]))
    assert np.array_equal(classify.forward(m, [1.0, None, 2.0]),
                          classify.forward(m, np.array([1.0, np.nan, 2.0])))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        classify.forward(classify.init_model(3, 2), [1.0, 2.0])


@given(st.lists(st.one_of(st.none(), st.floats(-1e3, 1e3)), min_size=5, max_size=5),
       st.integers(0, 1000))
def test_simplex_output(x, seed):
    p = classify.forward(classify.init_model(5, 9, seed=seed), x)
    assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-9


@given(st.floats(-50, 50))
def test_softmax_shift_invariance(shift):
    m = classify.init_model(4, 5, seed=1)
    x = [0.2, -0.4, 1.0, 0.0]
    p = classify.forward(m, x)
    m.biases[-1] = m.biases[-1] + shift
    assert classify.forward(m, x) == pytest.approx(p, abs=1e-12)


def test_loss_examples():
    assert classify.loss(np.full(9, 1 / 9), 4) == pytest.approx(math.log(9), abs=1e-12)
    assert math.log(9) == pytest.approx(2.1972, abs=1e-4)
    assert classify.loss(np.eye(9)[3], 3) == 0.0
    assert classify.loss(np.eye(9)[3], 0) == pytest.approx(27.631, abs=1e-3)


def test_init_bounds():
    m = classify.init_model(50, 9, seed=3)
    assert m.layer_sizes == (50, 128, 256, 128, 9)
    for w, fan_in in zip(m.weights, m.layer_sizes[:-1]):
        assert np.abs(w).max() <= math.sqrt(6 / fan_in)
    assert all(np.all(b == 0) for b in m.biases)


def _toy(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    X[y == 1] += 0.5
    return X, y


def test_separable_toy_reaches_full_accuracy():
    X, y = _toy()
    cfg = TrainConfig(epochs=200, batch_size=4, learning_rate=1e-2, seed=0)
    m = classify.train(X, y, cfg, n_classes=2, hidden=(8, 8, 8))
    assert (classify.forward(m, X).argmax(1) == y).all()
    ens = selection.fit(X, y, selection.BoostParams(rounds=20), feature_names=("a", "b"))
    assert (selection.predict_proba_matrix(ens, X).argmax(1) == y).all()
    assert len(m.loss_trace) == 200


def test_zero_learning_rate_keeps_init():
    X, y = _toy()
    cfg = TrainConfig(epochs=3, batch_size=5, learning_rate=0.0, seed=4, standardize=False)
    m = classify.train(X, y, cfg, n_classes=2, hidden=(6, 6, 6))
    init = classify.init_model(2, 2, seed=4, hidden=(6, 6, 6))
    for a, b in zip(m.params(), init.params()):
        assert np.array_equal(a, b)


def test_training_determinism_and_serialization():
    X, y = _toy(40, 1)
    cfg = TrainConfig(epochs=5, batch_size=8, seed=9)
    a = classify.train(X, y, cfg, n_classes=2, hidden=(8, 8, 8))
    b = classify.train(X, y, cfg, n_classes=2, hidden=(8, 8, 8))
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    back = MlpModel.from_dict(json.loads(json.dumps(a.to_dict())))
    assert np.array_equal(classify.forward(back, X), classify.forward(a, X))


def test_train_errors():
    X, y = _toy()
    with pytest.raises(TrainingError):
        classify.train(X, y + 5, TrainConfig(batch_size=4), n_classes=2)
    with pytest.raises(TrainingError):
        classify.train(X[:3], y[:3], TrainConfig(batch_size=4), n_classes=2)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)


def test_gradient_check_fresh_model():
    m = classify.init_model(10, 9, seed=0)
    x = np.random.default_rng(0).normal(size=10)
    assert _away_from_kinks(m, x)
    assert classify.gradient_check(m, x, 3, epsilon=1e-5) < 1e-4


def test_gradient_check_zero_model_is_a_kink_so_perturb():
    m = _zero_model(6, 4)
    x = np.ones(6)
    assert not _away_from_kinks(m, x)
    rng = np.random.default_rng(6)
    for w in m.weights:
        w += rng.normal(scale=1 / math.sqrt(w.shape[0]), size=w.shape)
    for b in m.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    assert _away_from_kinks(m, x)
    assert classify.gradient_check(m, x, 1) < 1e-4


def test_gradient_check_epsilon_stable():
    m = classify.init_model(8, 5, seed=2)
    x = np.random.default_rng(2).normal(size=8)
    e1 = classify.gradient_check(m, x, 0, epsilon=1e-5)
    e2 = classify.gradient_check(m, x, 0, epsilon=2e-5)
    assert e1 < 1e-4 and e2 < 1e-4
    with pytest.raises(ValueError):
        classify.gradient_check(m, x, 0, epsilon=1e-2)


def test_standardization_stored_and_applied():
    X, y = _toy(40)
    X[3, 1] = np.nan
    m = classify.train(X, y, TrainConfig(epochs=1, batch_size=8), n_classes=2,
                       hidden=(4, 4, 4))
    assert m.input_mean == pytest.approx(np.nanmean(X, axis=0))
    # missing value lands on the imputation value after scaling
    assert m.preprocess(X[3:4])[0, 1] == 0.0
