import numpy as np
import pytest

from s3vmkit.svm_supervised import (
    LinearModel,
    objective_value,
    parse_model,
    predict,
    predict_many,
    serialize_model,
    train_supervised,
)
from tests.conftest import dataset_from_dense


def _pair():
    return dataset_from_dense([[0.0], [1.0]], [-1, 1])


def test_separable_pair_classified():
    fit = train_supervised(_pair(), C=100.0, epochs=400, seed=0)
    assert predict(fit.model, np.array([0.0])) == -1
    assert predict(fit.model, np.array([1.0])) == 1


def test_vanishing_c_shrinks_weights():
    rng = np.random.default_rng(0)
    d = dataset_from_dense(rng.uniform(0, 1, (10, 3)), [1, -1] * 5)
    fit = train_supervised(d, C=1e-8, epochs=50, seed=0)
    assert np.linalg.norm(fit.model.w) <= 1e-3


def test_zero_model_objective_is_c_times_labeled_count():
    d = dataset_from_dense([[0.4], [0.6], [0.1]], [1, -1, 1])
    model = LinearModel(w=np.zeros(1), b=0.0)
    assert objective_value(model, d, C=2.5) == pytest.approx(2.5 * 3)


def test_perfect_margins_leave_only_regularizer():
    d = dataset_from_dense([[2.0], [-2.0]], [1, -1])
    model = LinearModel(w=np.array([1.0]), b=0.0)
    assert objective_value(model, d, C=10.0) == pytest.approx(0.5)


def _grid_minimum(points, labels, C, w_grid, b_grid):
    best = np.inf
    for w in w_grid:
        for b in b_grid:
            slack = np.maximum(0.0, 1.0 - labels * (points * w + b))
            best = min(best, 0.5 * w * w + C * slack.sum())
    return best


def test_solver_beats_coarse_grid_oracle():
    points = np.array([0.0, 1.0, 2.0, 3.0])
    labels = np.array([-1.0, -1.0, 1.0, 1.0])
    C = 1.0
    d = dataset_from_dense(points[:, None], labels.astype(int))
    grid_min = _grid_minimum(points, labels, C,
                             np.linspace(-4, 4, 161), np.linspace(-6, 6, 241))
    fit = train_supervised(d, C=C, epochs=3000, seed=1)
    assert fit.objective <= grid_min + 0.02 * grid_min + 1e-6


def test_objective_close_to_high_iteration_reference():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(0.3, 0.1, (8, 3)), rng.normal(0.7, 0.1, (8, 3))])
    d = dataset_from_dense(np.clip(X, 0, 1), [1] * 8 + [-1] * 8)
    for C in (0.5, 5.0):
        short = train_supervised(d, C=C, epochs=150, seed=0).objective
        reference = train_supervised(d, C=C, epochs=3000, seed=0).objective
        assert short <= reference * 1.02 + 1e-9


def test_deterministic_for_fixed_seed():
    rng = np.random.default_rng(4)
    d = dataset_from_dense(rng.uniform(0, 1, (12, 4)), rng.choice([-1, 1], 12).tolist()
                           if True else None)
    # ensure both classes
    d = dataset_from_dense(rng.uniform(0, 1, (12, 4)), [1, -1] * 6)
    a = train_supervised(d, C=1.0, epochs=60, seed=9)
    b = train_supervised(d, C=1.0, epochs=60, seed=9)
    assert np.array_equal(a.model.w, b.model.w)
    assert a.model.b == b.model.b
    assert a.objective == b.objective


def test_best_objective_monotone_in_epochs():
    rng = np.random.default_rng(5)
    d = dataset_from_dense(rng.uniform(0, 1, (10, 3)), [1, -1] * 5)
    objs = [train_supervised(d, C=2.0, epochs=e, seed=2).objective
            for e in (1, 2, 4, 8, 16, 32)]
    assert all(a >= b - 1e-12 for a, b in zip(objs, objs[1:]))


def test_slacks_recomputed_exactly():
    rng = np.random.default_rng(6)
    d = dataset_from_dense(rng.uniform(0, 1, (9, 2)), [1, -1, 1, -1, 1, -1, 1, -1, 1])
    fit = train_supervised(d, C=1.5, epochs=40, seed=0)
    Xl = d.X.toarray()
    y = d.labels.astype(np.float64)
    expected = np.maximum(0.0, 1.0 - y * (Xl @ fit.model.w + fit.model.b))
    assert np.array_equal(fit.slacks, expected)


def test_weight_norm_bounded_by_regularization_path():
    rng = np.random.default_rng(7)
    d = dataset_from_dense(rng.uniform(0, 1, (14, 5)), [1, -1] * 7)
    for C in (0.1, 1.0, 10.0):
        fit = train_supervised(d, C=C, epochs=80, seed=0)
        assert fit.model.w @ fit.model.w <= 2.0 * C * 14 + 1e-9


def test_training_errors():
    d_single = dataset_from_dense([[0.1], [0.2]], [1, 1])
    with pytest.raises(ValueError, match="both classes"):
        train_supervised(d_single, C=1.0)
    with pytest.raises(ValueError, match="C must be positive"):
        train_supervised(_pair(), C=0.0)
    tiny = dataset_from_dense([[0.5]], [1])
    with pytest.raises(ValueError, match="at least 2"):
        train_supervised(tiny, C=1.0)


def test_predict_sign_convention():
    model = LinearModel(w=np.array([1.0]), b=0.0)
    assert predict(model, np.array([2.0])) == 1
    assert predict(model, np.array([-2.0])) == -1
    assert predict(model, np.array([0.0])) == 1


def test_predict_many_matches_predict():
    rng = np.random.default_rng(8)
    model = LinearModel(w=rng.normal(size=4), b=0.3)
    X = rng.uniform(-1, 1, (20, 4))
    batch = predict_many(model, X)
    assert batch.tolist() == [predict(model, x) for x in X]


def test_model_serialization_round_trip():
    model = LinearModel(w=np.array([0.25, 0.0, -1.5]), b=0.125)
    text = serialize_model(model)
    again = parse_model(text, n_features=3)
    assert np.array_equal(again.w, model.w)
    assert again.b == model.b
    assert "2:" not in text   # zero weights stay implicit
