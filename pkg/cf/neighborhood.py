from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from dataset.dataset import RATING_MAX, RATING_MIN, RatingMatrix, center_columns, center_rows
from src.errors import RecommenderError
from src.logger import logger
from src.manifest import Axis, Weighting
from .similarity import SimilarityIndex


@dataclass(frozen=True)
class Prediction:
    """A rating estimate; support counts the neighbours actually used (0 means fallback)."""
    user_id: int
    item_id: int
    value: float
    support: int
    raw: Optional[float] = None

    @property
    def is_fallback(self) -> bool:
        return self.support == 0


class Predictor(Protocol):
    """What evaluation and top-N need from a trained model."""
    name: str
    train: RatingMatrix

    def predict(self, user_id: int, item_id: int) -> Prediction: ...

    def fallback(self, user_id: int, item_id: int) -> float: ...


def clamp_rating(value: float) -> float:
    return float(min(max(value, RATING_MIN), RATING_MAX))


class Baseline:
    """
    Fallback ratings from training means.

    `rating` walks the chain in `order` (e.g. user mean, then item mean) and
    ends at the global mean, so it always returns a finite value.
    """

    def __init__(self, train: RatingMatrix):
        self.train = train
        self.user_means = train.user_means()
        self.item_means = train.item_means()
        self.global_mean = train.global_mean()

    def user(self, user_id: int) -> float:
        if self.train.has_user(user_id):
            return float(self.user_means[self.train.user_index(user_id)])
        return np.nan

    def item(self, item_id: int) -> float:
        if self.train.has_item(item_id):
            return float(self.item_means[self.train.item_index(item_id)])
        return np.nan

    def rating(self, user_id: int, item_id: int, order: Sequence[Axis] = (Axis.USER, Axis.ITEM)) -> float:
        for axis in order:
            mean = self.user(user_id) if axis == Axis.USER else self.item(item_id)
            if np.isfinite(mean):
                return clamp_rating(mean)
        return clamp_rating(self.global_mean)


def simple_average(ratings: np.ndarray) -> tuple[float, int]:
    """Plain mean over the neighbours that rated the target; (nan, 0) when none did."""
    if len(ratings) == 0:
        return np.nan, 0
    return float(np.mean(ratings)), len(ratings)


def weighted_average(ratings: np.ndarray, similarities: np.ndarray) -> tuple[float, int]:
    """Sum(s*r) / Sum(|s|) over neighbours with s > 0; (nan, 0) when none qualify."""
    keep = similarities > 0
    if not keep.any():
        return np.nan, 0
    s = similarities[keep]
    return float(np.dot(s, ratings[keep]) / np.sum(np.abs(s))), int(keep.sum())


class CfModel:
    """
    User-user or item-item neighbourhood model.

    Similarity runs on the matrix centered along `axis` (user means for
    user-user, item means for item-item); predictions average raw ratings
    unless `restore_means` is set, in which case neighbours' centered
    ratings are averaged and the target's mean is added back.
    """

    def __init__(self, train: RatingMatrix, axis: Axis = Axis.USER, k: int = 30,
                 weighting: Weighting = Weighting.WEIGHTED, restore_means: bool = False):
        if k < 1:
            raise ValueError(f'k must be >= 1, got {k}')
        self.train = train
        self.axis = Axis(axis)
        self.k = k
        self.weighting = Weighting(weighting)
        self.restore_means = restore_means
        self.centered = center_rows(train) if self.axis == Axis.USER else center_columns(train)
        self.index = SimilarityIndex(self.centered)
        self.baseline = Baseline(train)
        self._neighbors: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        logger.debug('Built %s model: k=%d, weighting=%s, restore_means=%s',
                     self.name, k, self.weighting.value, restore_means)

    @property
    def name(self) -> str:
        return f'{self.axis.value}-cf'

    def neighbors(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Top-k neighbour indices and scores of a user (or item) index, memoised."""
        cached = self._neighbors.get(index)
        if cached is None:
            cached = self.index.neighbors(index, self.k)
            self._neighbors[index] = cached
        return cached

    def fallback(self, user_id: int, item_id: int) -> float:
        # own axis first: user-user tries the user mean, then the item mean
        other = Axis.ITEM if self.axis == Axis.USER else Axis.USER
        return self.baseline.rating(user_id, item_id, (self.axis, other))

    def predict(self, user_id: int, item_id: int, weighting: Optional[Weighting] = None) -> Prediction:
        u = self.train.user_index(user_id)
        i = self.train.item_index(item_id)
        weighting = self.weighting if weighting is None else Weighting(weighting)

        if self.axis == Axis.USER:
            target = u
            rated_by, ratings = self.train.item_users(i)
        else:
            target = i
            rated_by, ratings = self.train.user_items(u)

        members, scores = self.neighbors(target)
        if len(rated_by) and len(members):
            pos = np.minimum(np.searchsorted(rated_by, members), len(rated_by) - 1)
            hit = rated_by[pos] == members
            values = ratings[pos[hit]]
            scores = scores[hit]
            if self.restore_means:
                values = values - self.centered.means[members[hit]]
        else:
            values = np.empty(0)
            scores = np.empty(0)

        if weighting == Weighting.SIMPLE:
            estimate, support = simple_average(values)
        else:
            estimate, support = weighted_average(values, scores)

        if support == 0:
            return Prediction(int(user_id), int(item_id), self.fallback(user_id, item_id), 0)
        if self.restore_means:
            estimate += self.centered.means[target]
        return Prediction(int(user_id), int(item_id), clamp_rating(estimate), support, raw=estimate)


def predict_simple(model: CfModel, user: int, item: int) -> Prediction:
    """Unweighted mean of the neighbours' ratings."""
    return model.predict(user, item, Weighting.SIMPLE)


def predict_weighted(model: CfModel, user: int, item: int) -> Prediction:
    """Similarity-weighted mean over positively similar neighbours."""
    return model.predict(user, item, Weighting.WEIGHTED)


def rank_predictions(predictions: Sequence[Prediction], n: int) -> list[tuple[int, float]]:
    """Best n by value; fallbacks after every supported prediction; ties by ascending item id."""
    ordered = sorted(predictions, key=lambda p: (p.support == 0, -p.value, p.item_id))
    return [(p.item_id, p.value) for p in ordered[:n]]


def recommend_top_n(model: Predictor, user: int, n: int) -> list[tuple[int, float]]:
    """
    Top-n items the user has not rated in the model's training matrix.

    Works with any predictor exposing `train` and `predict`. Items the
    predictor cannot score at all (e.g. no feature row) are left out.
    """
    if n < 1:
        raise ValueError(f'n must be >= 1, got {n}')
    train = model.train
    u = train.user_index(user)
    rated, _ = train.user_items(u)
    candidates = np.setdiff1d(np.arange(train.n_items), rated)

    predictions = []
    skipped = 0
    for i in candidates:
        try:
            predictions.append(model.predict(user, int(train.item_ids[i])))
        except RecommenderError:
            skipped += 1
    if skipped:
        logger.debug('Skipped %d unscorable candidates for user %s', skipped, user)
    return rank_predictions(predictions, n)
