import numpy as np
import pytest

from explainable_bpr.dataset import InteractionDataset
from explainable_bpr.model import (
    FactorModel,
    init_model,
    preference,
    preference_probability,
    recommend,
    score,
    scores,
    top_k,
)


def _model(P, Q):
    return FactorModel(np.asarray(P, dtype=np.float64), np.asarray(Q, dtype=np.float64))


def _line_model(item_scores):
    """One user with latent dim 1 whose scores equal ``item_scores``."""
    return _model([[1.0]], [[value] for value in item_scores])


def test_init_shapes():
    model = init_model(10, 10, 5, seed=0)
    assert model.P.shape == (10, 5)
    assert model.Q.shape == (10, 5)
    assert model.latent_dim == 5


def test_init_is_deterministic():
    first = init_model(10, 8, 4, seed=3)
    second = init_model(10, 8, 4, seed=3)
    np.testing.assert_array_equal(first.P, second.P)
    np.testing.assert_array_equal(first.Q, second.Q)


def test_init_is_zero_mean():
    model = init_model(1000, 1000, 500, seed=0)
    values = np.concatenate([model.P.ravel(), model.Q.ravel()]).astype(np.float64)
    standard_error = values.std() / np.sqrt(values.size)
    assert abs(values.mean()) < 3 * standard_error


def test_incompatible_factor_shapes():
    with pytest.raises(ValueError):
        _model([[1.0, 2.0]], [[1.0]])


def test_score_arithmetic():
    model = _model([[1.0, 2.0]], [[3.0, -1.0], [0.0, 0.0]])
    assert score(model, 0, 0) == 1.0
    assert score(model, 0, 1) == 0.0


def test_score_matches_multiply_accumulate():
    model = init_model(4, 6, 3, seed=1, scale=1.0, dtype=np.float64)
    for u in range(4):
        for i in range(6):
            expected = sum(model.P[u, k] * model.Q[i, k] for k in range(3))
            assert score(model, u, i) == pytest.approx(expected)
    np.testing.assert_allclose(scores(model, 2), [score(model, 2, i) for i in range(6)])


def test_preference_identity():
    model = init_model(2, 3, 2, seed=0)
    assert preference(model, 0, 1, 1) == 0.0
    assert preference_probability(model, 0, 1, 1) == 0.5


def test_preference_difference():
    model = _line_model([2.0, 0.5])
    assert preference(model, 0, 0, 1) == pytest.approx(1.5)
    values = preference(model, np.array([0, 0]), np.array([0, 1]), np.array([1, 0]))
    np.testing.assert_allclose(values, [1.5, -1.5])


def test_top_k_single_candidate():
    ranked = top_k(_line_model([1.0, 2.0]), 0, [1], 10)
    assert ranked.items.tolist() == [1]
    assert ranked.truncated


def test_top_k_descending_scores():
    ranked = top_k(_line_model([5.0, 4.0, 3.0, 2.0]), 0, [0, 1, 2, 3], 3)
    assert ranked.items.tolist() == [0, 1, 2]
    assert not ranked.truncated
    assert len(ranked) == 3


def test_top_k_ties_by_item_index():
    ranked = top_k(_line_model([1.0, 1.0, 1.0]), 0, [2, 0, 1], 3)
    assert ranked.items.tolist() == [0, 1, 2]


def test_top_k_rejects_bad_candidates():
    model = _line_model([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        top_k(model, 0, [], 2)
    with pytest.raises(ValueError):
        top_k(model, 0, [1, 1], 2)
    train = InteractionDataset.from_matrix(np.array([[0, 1, 0]]))
    with pytest.raises(ValueError):
        top_k(model, 0, [0, 1], 2, exclude=train)


def test_recommend_skips_training_positives():
    model = _line_model([3.0, 2.0, 1.0, 0.0])
    train = InteractionDataset.from_matrix(np.array([[1, 0, 1, 0]]))
    assert recommend(model, 0, train, 2).items.tolist() == [1, 3]


def test_copy_is_independent():
    model = init_model(2, 2, 2, seed=0)
    copy = model.copy()
    copy.P[0, 0] = 99
    assert model.P[0, 0] != 99
    assert model.is_finite()
