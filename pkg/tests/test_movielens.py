"""
End-to-end checks on real MovieLens ratings.

These need a MovieLens ratings file (ml-latest-small ratings.csv or the
100K u.data) named by MOVIEREC_MOVIELENS, and take minutes. Run with:

    MOVIEREC_MOVIELENS=data/ml-latest-small/ratings.csv pytest -m slow
"""
import os
import time

import numpy as np
import pytest

from cf.neighborhood import CfModel
from dataset.catalog import attributes_from_catalog, load_catalog
from dataset.dataset import holdout_split, load_ratings
from evaluation.evaluation import evaluate
from factorization.factorization import sweep_k, train_factors
from neural.grid import compare_modes
from src.manifest import (
    DEFAULT_ACTIVATIONS, DEFAULT_ARCHITECTURES, DEFAULT_KS, MOVIELENS_100K, MOVIELENS_CSV, Axis, MLPConfig, SgdConfig,
)

MOVIELENS = os.environ.get('MOVIEREC_MOVIELENS')

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not MOVIELENS, reason='MOVIEREC_MOVIELENS is not set'),
]


@pytest.fixture(scope='module')
def split():
    fmt = MOVIELENS_CSV if MOVIELENS.endswith('.csv') else MOVIELENS_100K
    return holdout_split(load_ratings(MOVIELENS, fmt), 0.25, seed=0)


@pytest.mark.parametrize('axis', [Axis.USER, Axis.ITEM])
def test_neighbourhood_rmse(split, axis):
    train, test = split
    report = evaluate(CfModel(train, axis, k=30), test)
    assert 0.85 <= report.rmse <= 1.25


def test_factor_rmse(split):
    train, test = split
    report = evaluate(train_factors(train, SgdConfig(k=25, epochs=50)), test)
    assert 0.85 <= report.rmse <= 1.25


def test_sweep_spread_on_500_users(split):
    train, test = split
    users = train.user_ids[np.argsort(-train.user_counts(), kind='stable')[:500]]
    started = time.monotonic()
    report = sweep_k(train.restrict_users(users), test.restrict_users(users), DEFAULT_KS, SgdConfig(epochs=50))
    assert time.monotonic() - started < 300
    assert report.spread < 0.15


def test_nn_grid_on_nine_users(split):
    catalog_path = os.path.join(os.path.dirname(MOVIELENS), 'movies.csv')
    if not os.path.isfile(catalog_path):
        pytest.skip('no movies.csv next to the ratings file')
    train, test = split
    attributes = attributes_from_catalog(load_catalog(catalog_path))
    started = time.monotonic()
    comparison = compare_modes(train, test, attributes, DEFAULT_ACTIVATIONS, DEFAULT_ARCHITECTURES, MLPConfig())
    assert time.monotonic() - started < 600
    assert len(comparison.global_grid.mse) == 12
    assert comparison.per_user_grid.render().splitlines()[1].startswith('activation')
