from dataclasses import dataclass

import numpy as np
from sklearn.preprocessing import normalize

from cf.neighborhood import Baseline, Prediction, clamp_rating, weighted_average
from cf.similarity import SCORE_DECIMALS, centered_cosine
from dataset.catalog import FeatureMatrix
from dataset.dataset import RatingMatrix
from src.errors import InsufficientDataError, UnknownIdError
from src.logger import logger


@dataclass(frozen=True, eq=False)
class UserProfile:
    """A user's taste over the feature columns of a FeatureMatrix, same order."""
    user_id: int
    vector: np.ndarray


def _usable_ratings(train: RatingMatrix, features: FeatureMatrix, user: int):
    u = train.user_index(user)
    items, ratings = train.user_items(u)
    if len(items) == 0:
        raise InsufficientDataError(f'user {user} has no training ratings')
    raw_items = train.item_ids[items]
    has_row = np.array([features.has_item(i) for i in raw_items], dtype=bool)
    return raw_items, ratings, has_row


def build_profile(train: RatingMatrix, features: FeatureMatrix, user: int) -> UserProfile:
    """
    profile[f] = mean centered rating over the user's rated items that have feature f.

    Ratings are centered on the user's mean over all their training ratings.
    Features absent from every rated item stay 0.
    """
    raw_items, ratings, has_row = _usable_ratings(train, features, user)
    if not has_row.any():
        raise InsufficientDataError(f'user {user} rated no item with a feature row')

    centered = ratings - ratings.mean()
    rows = np.array([features.row_index(i) for i in raw_items[has_row]])
    item_features = features.matrix[rows].astype(np.float64)

    counts = item_features.sum(axis=0)
    sums = centered[has_row] @ item_features
    with np.errstate(invalid='ignore', divide='ignore'):
        vector = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return UserProfile(int(user), vector)


def score_item(profile: UserProfile, features: FeatureMatrix, item: int) -> float:
    """Cosine between the profile and the item's binary vector; 0 when either is all zeros."""
    return centered_cosine(profile.vector, features.vector(item))


class ContentModel:
    """
    Content-based predictor.

    The target item is compared, in feature space, with every item the user
    rated; the k most similar with positive similarity vote with their
    ratings, weighted by similarity.
    """
    name = 'content'

    def __init__(self, train: RatingMatrix, features: FeatureMatrix, k: int = 30):
        if k < 1:
            raise ValueError(f'k must be >= 1, got {k}')
        self.train = train
        self.features = features
        self.k = k
        self.baseline = Baseline(train)
        # Unit rows make cosine a dot product; zero rows stay zero
        self._unit = normalize(features.matrix.astype(np.float64), norm='l2', axis=1)
        self._feature_row = np.array(
            [features.row_index(i) if features.has_item(i) else -1 for i in train.item_ids], dtype=np.int64)
        missing = int(np.sum(self._feature_row < 0))
        if missing:
            logger.info('%d of %d rated items have no feature row', missing, train.n_items)

    def fallback(self, user_id: int, item_id: int) -> float:
        return self.baseline.rating(user_id, item_id)

    def predict(self, user_id: int, item_id: int) -> Prediction:
        if not self.features.has_item(item_id):
            raise UnknownIdError(f'item {item_id} has no feature row')
        u = self.train.user_index(user_id)
        items, ratings = self.train.user_items(u)
        rows = self._feature_row[items]
        usable = rows >= 0
        items, ratings, rows = items[usable], ratings[usable], rows[usable]

        if len(rows):
            sims = np.clip(self._unit[rows] @ self._unit[self.features.row_index(item_id)], -1.0, 1.0)
            order = np.lexsort((items, -np.round(sims, SCORE_DECIMALS)))[:self.k]
            estimate, support = weighted_average(ratings[order], sims[order])
        else:
            estimate, support = np.nan, 0

        if support == 0:
            return Prediction(int(user_id), int(item_id), self.fallback(user_id, item_id), 0)
        return Prediction(int(user_id), int(item_id), clamp_rating(estimate), support, raw=estimate)


def predict_content(train: RatingMatrix, features: FeatureMatrix, user: int, item: int, k: int) -> Prediction:
    """One-off content prediction; build a ContentModel to score many pairs."""
    return ContentModel(train, features, k).predict(user, item)
