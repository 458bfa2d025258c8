from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from cf.neighborhood import Baseline, Prediction
from dataset.catalog import ATTRIBUTE_COLUMNS, CATEGORICAL_ATTRIBUTES
from dataset.dataset import RatingMatrix
from src.errors import InsufficientDataError, UnknownIdError
from src.logger import logger
from src.manifest import MLPConfig, NetworkMode
from .neural import EncodedExample, MLPModel, N_CLASSES, predict_class, train_mlp


def rating_class(rating: float) -> int:
    """Half stars round up (3.5 -> 4); 0.5 becomes class 1."""
    return int(np.clip(np.floor(rating + 0.5), 1, N_CLASSES))


class FeatureEncoder:
    """
    Numeric inputs for (user, item) pairs from an item attribute frame.

    Categorical columns (genres, country, actor, director) become ordinal
    codes in order of first appearance in the frame; empty strings count as
    missing. Numeric columns are used as-is. With `include_user`, the raw
    user id is the first input. `fit` learns per-column mean and scale on
    training pairs; after standardisation missing values read as 0.
    """

    def __init__(self, attributes: pd.DataFrame, include_user: bool = True,
                 columns: Optional[Sequence[str]] = None):
        columns = [c for c in (columns or ATTRIBUTE_COLUMNS) if c in attributes.columns]
        if not columns:
            raise InsufficientDataError('attribute frame has none of the usable columns')
        self.columns = columns
        self.include_user = include_user
        table = pd.DataFrame(index=attributes.index)
        for column in columns:
            values = attributes[column]
            if column in CATEGORICAL_ATTRIBUTES:
                codes, _ = pd.factorize(values.replace('', np.nan), use_na_sentinel=True)
                table[column] = np.where(codes < 0, np.nan, codes).astype(np.float64)
            else:
                table[column] = values.astype(np.float64)
        self._table = table
        self._rows = {int(item): pos for pos, item in enumerate(table.index)}
        self._values = table.to_numpy(dtype=np.float64)
        self.scaler = StandardScaler()
        self.fitted = False

    @property
    def feature_names(self) -> list[str]:
        return (['user_id'] if self.include_user else []) + list(self.columns)

    @property
    def width(self) -> int:
        return len(self.feature_names)

    def has_item(self, item_id: int) -> bool:
        return int(item_id) in self._rows

    def raw_inputs(self, user_ids: Sequence[int], item_ids: Sequence[int]) -> np.ndarray:
        try:
            rows = [self._rows[int(i)] for i in item_ids]
        except KeyError as e:
            raise UnknownIdError(f'item {e.args[0]} has no attribute row') from None
        X = self._values[rows] if rows else np.empty((0, len(self.columns)))
        if self.include_user:
            X = np.column_stack([np.asarray(user_ids, dtype=np.float64), X])
        return X

    def fit(self, user_ids: Sequence[int], item_ids: Sequence[int]) -> 'FeatureEncoder':
        X = self.raw_inputs(user_ids, item_ids)
        if len(X) == 0:
            raise InsufficientDataError('cannot fit the encoder on no pairs')
        self.scaler.fit(X)
        self.fitted = True
        return self

    def transform(self, user_ids: Sequence[int], item_ids: Sequence[int]) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError('encoder used before fit')
        X = self.scaler.transform(self.raw_inputs(user_ids, item_ids))
        return np.nan_to_num(X, nan=0.0)


def encode_examples(m: RatingMatrix, encoder: FeatureEncoder, fit: bool = False) -> list[EncodedExample]:
    """
    One example per rating of m whose item has an attribute row, in file order.

    With `fit`, the encoder's scaler is fitted on exactly those pairs first.
    """
    user_ids = m.user_ids[m.users]
    item_ids = m.item_ids[m.items]
    usable = np.array([encoder.has_item(i) for i in item_ids], dtype=bool)
    if not usable.all():
        logger.debug('%d of %d ratings have no attribute row', int((~usable).sum()), m.nnz)
    user_ids, item_ids, ratings = user_ids[usable], item_ids[usable], m.ratings[usable]
    if len(ratings) == 0:
        return []
    if fit:
        encoder.fit(user_ids, item_ids)
    X = encoder.transform(user_ids, item_ids)
    return [
        EncodedExample(int(u), int(i), x, rating_class(r))
        for u, i, x, r in zip(user_ids, item_ids, X, ratings)
    ]


def user_seed(seed: int, user_id: int) -> int:
    """Seed of one user's network in per-user mode."""
    return int(np.random.SeedSequence([seed, user_id]).generate_state(1)[0])


class MLPPredictor:
    """
    Rating predictor backed by one network (global mode) or one per user.

    The predicted rating is the argmax class. Per-user networks are trained
    on first use; users without usable training examples fall back to the
    baseline.
    """
    name = 'mlp'

    def __init__(self, train: RatingMatrix, attributes: pd.DataFrame, cfg: MLPConfig):
        self.train = train
        self.cfg = cfg
        self.baseline = Baseline(train)
        self.encoder = FeatureEncoder(attributes, include_user=cfg.mode == NetworkMode.GLOBAL)
        self.examples = encode_examples(train, self.encoder, fit=True)
        if not self.examples:
            raise InsufficientDataError('no training rating has an attribute row')
        self._models: dict[Optional[int], Optional[MLPModel]] = {}
        if cfg.mode == NetworkMode.GLOBAL:
            logger.info('Training global network on %d examples', len(self.examples))
            self._models[None] = train_mlp(cfg, self.examples)

    def model_for(self, user_id: int) -> Optional[MLPModel]:
        if self.cfg.mode == NetworkMode.GLOBAL:
            return self._models[None]
        if user_id not in self._models:
            own = [e for e in self.examples if e.user_id == user_id]
            seed = user_seed(self.cfg.seed, user_id)
            self._models[user_id] = train_mlp(self.cfg, own, seed=seed) if own else None
        return self._models[user_id]

    def fallback(self, user_id: int, item_id: int) -> float:
        return self.baseline.rating(user_id, item_id)

    def predict(self, user_id: int, item_id: int) -> Prediction:
        self.train.user_index(user_id)
        x = self.encoder.transform([user_id], [item_id])[0]
        model = self.model_for(int(user_id))
        if model is None:
            return Prediction(int(user_id), int(item_id), self.fallback(user_id, item_id), 0)
        value = float(predict_class(model, x))
        return Prediction(int(user_id), int(item_id), value, 1, raw=value)
