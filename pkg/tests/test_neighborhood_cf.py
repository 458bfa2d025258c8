import os

import numpy as np
import pytest

from cf.neighborhood import (
    Baseline, CfModel, Prediction, predict_simple, predict_weighted, rank_predictions,
    recommend_top_n, simple_average, weighted_average,
)
from dataset.dataset import RatingMatrix, load_ratings
from src.errors import UnknownIdError
from src.manifest import Axis, Weighting

FOUR_USERS_DIR = os.path.join(os.path.dirname(__file__), 'four_users_test')


@pytest.fixture
def four_users():
    return load_ratings(os.path.join(FOUR_USERS_DIR, 'ratings.csv'))


def random_matrix(rng, size=8, density=0.5):
    mask = rng.random((size, size)) < density
    users, items = np.nonzero(mask)
    return RatingMatrix.from_arrays(users, items, rng.integers(1, 6, len(users)),
                                    user_universe=np.arange(size), item_universe=np.arange(size))


def oracle_predict(dense: np.ndarray, x: int, i: int, k: int, weighted: bool) -> float:
    """Dense, loop-based user-user prediction with the same conventions as CfModel."""
    observed = ~np.isnan(dense)
    means = np.array([dense[u][observed[u]].mean() if observed[u].any() else np.nan for u in range(len(dense))])
    centered = np.where(observed, dense - means[:, None], 0.0)
    norms = np.sqrt((centered ** 2).sum(axis=1))

    candidates = []
    if norms[x] > 0:
        for y in range(len(dense)):
            if y != x and norms[y] > 0:
                s = centered[x] @ centered[y] / (norms[x] * norms[y])
                candidates.append((round(s, 12), y, s))
    candidates.sort(key=lambda t: (-t[0], t[1]))
    neighbors = [(y, s) for _, y, s in candidates[:k] if observed[y, i]]

    if weighted:
        positive = [(y, s) for y, s in neighbors if s > 0]
        estimate = sum(s * dense[y, i] for y, s in positive) / sum(abs(s) for _, s in positive) if positive else None
    else:
        estimate = np.mean([dense[y, i] for y, _ in neighbors]) if neighbors else None

    if estimate is None:
        item_mean = np.nanmean(dense[:, i]) if observed[:, i].any() else np.nan
        estimate = next((v for v in (means[x], item_mean) if not np.isnan(v)), np.nanmean(dense))
    return float(np.clip(estimate, 1, 5))


def test_simple_and_weighted_average():
    assert simple_average(np.array([5.0, 3.0])) == (4.0, 2)
    assert np.isnan(simple_average(np.empty(0))[0])
    value, support = weighted_average(np.array([5.0, 1.0, 2.0]), np.array([0.5, -0.9, 0.25]))
    assert support == 2
    assert value == pytest.approx((0.5 * 5 + 0.25 * 2) / 0.75)
    assert weighted_average(np.array([4.0]), np.array([-0.3]))[1] == 0


@pytest.mark.parametrize('ratings, similarities, expected', [
    ([5.0, 3.0], [0.6, 0.4], 4.2),
    ([2.0, 4.0], [0.5, 0.5], 3.0),
    ([4.0], [0.13], 4.0),
])
def test_weighted_average_examples(ratings, similarities, expected):
    value, support = weighted_average(np.array(ratings), np.array(similarities))
    assert value == pytest.approx(expected)
    assert support == len(ratings)


def test_rank_predictions_ties_by_item_id():
    predictions = [Prediction(1, 9, 2.0, 1), Prediction(1, 7, 4.5, 1), Prediction(1, 3, 4.5, 1)]
    assert [item for item, _ in rank_predictions(predictions, 10)] == [3, 7, 9]


def test_weighted_equals_simple_under_equal_weights():
    rng = np.random.default_rng(0)
    for _ in range(100):
        ratings = rng.integers(1, 6, rng.integers(1, 10)).astype(float)
        weighted, _ = weighted_average(ratings, np.full(len(ratings), 0.37))
        simple, _ = simple_average(ratings)
        assert abs(weighted - simple) < 1e-12


def test_four_users_user_cf(four_users):
    model = CfModel(four_users, Axis.USER, k=2)
    # neighbours of user 1: user 2 (0.23) and user 4 (-0.44); both rated movie 2
    weighted = predict_weighted(model, 1, 2)
    assert (weighted.value, weighted.support) == (5.0, 1)
    simple = predict_simple(model, 1, 2)
    assert (simple.value, simple.support) == (5.0, 2)


def test_four_users_restore_means(four_users):
    model = CfModel(four_users, Axis.USER, k=2, weighting=Weighting.SIMPLE, restore_means=True)
    prediction = model.predict(1, 2)
    # 13/3 + mean(5 - 10/3, 5 - 10/3)
    assert prediction.raw == pytest.approx(6.0)
    assert prediction.value == 5.0


def test_zero_norm_user_falls_back_to_own_mean(four_users):
    prediction = CfModel(four_users, Axis.USER, k=2).predict(3, 2)
    assert prediction.is_fallback
    assert prediction.value == 3.0


def test_item_cf_falls_back_to_item_mean():
    m = RatingMatrix.from_arrays([1, 2, 2], [1, 1, 2], [4, 2, 5])
    model = CfModel(m, Axis.ITEM, k=3)
    prediction = model.predict(1, 2)
    assert prediction.is_fallback
    assert prediction.value == 5.0


def test_unknown_ids_raise(four_users):
    model = CfModel(four_users, Axis.USER)
    with pytest.raises(UnknownIdError):
        model.predict(99, 1)
    with pytest.raises(UnknownIdError):
        model.predict(1, 99)


def test_invalid_k(four_users):
    with pytest.raises(ValueError):
        CfModel(four_users, Axis.USER, k=0)


@pytest.mark.parametrize('weighted', [False, True])
def test_user_cf_matches_oracle(weighted):
    rng = np.random.default_rng(42 + weighted)
    for _ in range(100):
        m = random_matrix(rng)
        dense = m.to_dense()
        model = CfModel(m, Axis.USER, k=3)
        predict = predict_weighted if weighted else predict_simple
        for x in range(m.n_users):
            for i in range(m.n_items):
                if not np.isnan(dense[x, i]):
                    continue
                expected = oracle_predict(dense, x, i, 3, weighted)
                assert predict(model, x, i).value == pytest.approx(expected, abs=1e-9)


def test_item_cf_is_user_cf_on_transpose():
    rng = np.random.default_rng(7)
    for _ in range(30):
        m = random_matrix(rng)
        items = CfModel(m, Axis.ITEM, k=3)
        users = CfModel(m.transpose(), Axis.USER, k=3)
        for u in m.user_ids:
            for i in m.item_ids:
                a, b = items.predict(u, i), users.predict(i, u)
                assert a.value == pytest.approx(b.value, abs=1e-12)
                assert a.support == b.support


def test_baseline_chain():
    m = RatingMatrix.from_arrays([1, 1], [1, 2], [2, 4], user_universe=[1, 2], item_universe=[1, 2, 3])
    baseline = Baseline(m)
    assert baseline.rating(1, 3) == 3.0
    assert baseline.rating(2, 1) == 2.0
    assert baseline.rating(2, 3) == 3.0
    assert baseline.rating(2, 2, order=(Axis.USER,)) == 3.0


def test_cf_fallback_walks_user_then_item_then_global():
    m = RatingMatrix.from_arrays([1, 2], [1, 1], [4, 4], user_universe=[1, 2, 3], item_universe=[1, 2])
    user_cf = CfModel(m, Axis.USER, k=2)
    assert user_cf.predict(3, 1).value == 4.0
    assert user_cf.predict(3, 1).is_fallback
    assert user_cf.predict(3, 2).value == 4.0

    m = RatingMatrix.from_arrays([1, 1, 2], [1, 2, 1], [2, 4, 5], user_universe=[1, 2], item_universe=[1, 2, 3])
    item_cf = CfModel(m, Axis.ITEM, k=2)
    assert item_cf.predict(1, 3).value == 3.0
    assert item_cf.fallback(2, 3) == 5.0


def test_rank_predictions_orders_fallbacks_last():
    predictions = [
        Prediction(1, 10, 4.0, 2),
        Prediction(1, 11, 5.0, 0),
        Prediction(1, 12, 4.0, 1),
        Prediction(1, 9, 4.5, 3),
    ]
    assert rank_predictions(predictions, 3) == [(9, 4.5), (10, 4.0), (12, 4.0)]


def test_recommend_top_n(four_users):
    model = CfModel(four_users, Axis.USER, k=2)
    assert recommend_top_n(model, 1, 10) == [(2, 5.0)]
    assert len(recommend_top_n(model, 3, 1)) == 1


def test_recommend_top_n_nothing_left():
    m = RatingMatrix.from_arrays([1, 1, 2], [1, 2, 1], [4, 2, 5])
    assert recommend_top_n(CfModel(m, Axis.USER), 1, 10) == []


def test_recommend_top_n_unknown_user(four_users):
    with pytest.raises(UnknownIdError):
        recommend_top_n(CfModel(four_users, Axis.USER), 42, 10)
