import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from cf.neighborhood import Baseline, Prediction, clamp_rating
from dataset.dataset import RatingMatrix
from evaluation.evaluation import EvalReport, evaluate
from evaluation.report import render_table
from src.errors import InsufficientDataError, TrainingError, UnknownIdError
from src.logger import logger
from src.manifest import SgdConfig

LOG_EVERY = 10


@dataclass(eq=False)
class FactorModel:
    """
    Latent factors: P (users x k) and Q (items x k); r_hat(x, i) = q_i . p_x.

    user_ids/item_ids map raw ids to rows. `trained_users`/`trained_items`
    mark rows that saw at least one training rating; the rest predict via
    the baseline.
    """
    P: np.ndarray
    Q: np.ndarray
    user_ids: np.ndarray
    item_ids: np.ndarray
    config: SgdConfig
    trace: list[float] = field(default_factory=list)
    trained_users: Optional[np.ndarray] = None
    trained_items: Optional[np.ndarray] = None
    baseline: Optional[Baseline] = field(default=None, repr=False)
    train: Optional[RatingMatrix] = field(default=None, repr=False)
    name: str = 'svd'

    def __post_init__(self):
        if self.P.ndim != 2 or self.Q.ndim != 2 or self.P.shape[1] != self.Q.shape[1]:
            raise ValueError(f'P {self.P.shape} and Q {self.Q.shape} must share k columns')
        if self.P.shape[1] < 1:
            raise ValueError('k must be >= 1')
        if len(self.user_ids) != self.P.shape[0] or len(self.item_ids) != self.Q.shape[0]:
            raise ValueError('id maps do not match factor rows')
        if self.trained_users is None:
            self.trained_users = np.ones(self.P.shape[0], dtype=bool)
        if self.trained_items is None:
            self.trained_items = np.ones(self.Q.shape[0], dtype=bool)
        self._user_rows = {int(raw): row for row, raw in enumerate(self.user_ids)}
        self._item_rows = {int(raw): row for row, raw in enumerate(self.item_ids)}

    @property
    def k(self) -> int:
        return self.P.shape[1]

    def user_row(self, user_id: int) -> int:
        try:
            return self._user_rows[int(user_id)]
        except KeyError:
            raise UnknownIdError(f'user {user_id} out of range of the factor model') from None

    def item_row(self, item_id: int) -> int:
        try:
            return self._item_rows[int(item_id)]
        except KeyError:
            raise UnknownIdError(f'item {item_id} out of range of the factor model') from None

    def raw(self, user_id: int, item_id: int) -> float:
        """Unclamped q_i . p_x."""
        return float(np.dot(self.Q[self.item_row(item_id)], self.P[self.user_row(user_id)]))

    def fallback(self, user_id: int, item_id: int) -> float:
        if self.baseline is None:
            return clamp_rating(0.0)
        return self.baseline.rating(user_id, item_id)

    def predict(self, user_id: int, item_id: int) -> Prediction:
        return predict_factor(self, user_id, item_id)


def sgd_step(p: np.ndarray, q: np.ndarray, r: float, learning_rate: float,
             regularization: float = 0.0) -> tuple[np.ndarray, np.ndarray, float]:
    """
    One SGD update on a single observed rating, both factors from the old values.

    e = r - q.p;  q += lr (e p - reg q);  p += lr (e q - reg p).
    That is -lr/2 times the gradient of (r - q.p)^2 + reg (|q|^2 + |p|^2).
    Returns (new p, new q, e).
    """
    error = r - np.dot(q, p)
    new_q = q + learning_rate * (error * p - regularization * q)
    new_p = p + learning_rate * (error * q - regularization * p)
    return new_p, new_q, error


def reconstruction_sse(P: np.ndarray, Q: np.ndarray, m: RatingMatrix) -> float:
    """Sum of squared errors over the observed entries of m."""
    predicted = np.einsum('ij,ij->i', P[m.users], Q[m.items])
    return float(np.sum((m.ratings - predicted) ** 2))


def _init_factors(rng: np.random.Generator, rows: int, k: int, scale: float) -> np.ndarray:
    # uniform on (-scale, scale]
    return scale - 2.0 * scale * rng.random((rows, k))


def train_factors(train: RatingMatrix, cfg: SgdConfig) -> FactorModel:
    """
    Minimise the SSE over observed ratings by plain SGD.

    Entries are visited in a seed-shuffled order every epoch; the SSE after
    each epoch goes into the model trace. A non-finite SSE raises
    TrainingError naming the epoch.
    """
    if train.nnz == 0:
        raise InsufficientDataError('cannot factorise an empty rating matrix')

    rng = np.random.default_rng(cfg.seed)
    P = _init_factors(rng, train.n_users, cfg.k, cfg.init_scale)
    Q = _init_factors(rng, train.n_items, cfg.k, cfg.init_scale)
    users, items, ratings = train.users, train.items, train.ratings
    lr, reg = cfg.learning_rate, cfg.regularization

    logger.info('Training factors: k=%d, epochs=%d, lr=%g, reg=%g, seed=%d on %d ratings',
                cfg.k, cfg.epochs, lr, reg, cfg.seed, train.nnz)
    trace = []
    with np.errstate(over='ignore', invalid='ignore'):
        for epoch in range(1, cfg.epochs + 1):
            for e in rng.permutation(train.nnz):
                u, i = users[e], items[e]
                P[u], Q[i], _ = sgd_step(P[u], Q[i], ratings[e], lr, reg)
            sse = reconstruction_sse(P, Q, train)
            if not np.isfinite(sse):
                raise TrainingError(f'SSE became non-finite at epoch {epoch}')
            trace.append(sse)
            logger.debug('epoch %d/%d: SSE %.6f', epoch, cfg.epochs, sse)
            if epoch % LOG_EVERY == 0 or epoch == cfg.epochs:
                logger.info('epoch %d/%d: SSE %.4f', epoch, cfg.epochs, sse)

    return FactorModel(
        P=P, Q=Q,
        user_ids=train.user_ids, item_ids=train.item_ids,
        config=cfg, trace=trace,
        trained_users=train.user_counts() > 0,
        trained_items=train.item_counts() > 0,
        baseline=Baseline(train),
        train=train,
    )


def predict_factor(model: FactorModel, user: int, item: int) -> Prediction:
    """q_i . p_x clamped to [1, 5]; `raw` keeps the unclamped dot product."""
    u = model.user_row(user)
    i = model.item_row(item)
    if not (model.trained_users[u] and model.trained_items[i]):
        return Prediction(int(user), int(item), model.fallback(user, item), 0)
    raw = float(np.dot(model.Q[i], model.P[u]))
    return Prediction(int(user), int(item), clamp_rating(raw), 1, raw=raw)

####################
# Persistence
####################

def save_factor_model(model: FactorModel, path: str):
    """npz with dims, P, Q, id maps, trained masks and the config echo; float64 round-trips bit-exactly."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    np.savez(
        path,
        dims=np.array([model.P.shape[0], model.Q.shape[0], model.k], dtype=np.int64),
        P=model.P, Q=model.Q,
        user_ids=model.user_ids, item_ids=model.item_ids,
        trained_users=model.trained_users, trained_items=model.trained_items,
        trace=np.asarray(model.trace, dtype=np.float64),
        config=np.array(model.config.model_dump_json()),
    )
    logger.info('Saved factor model to %s', path)


def load_factor_model(path: str) -> FactorModel:
    with np.load(path, allow_pickle=False) as data:
        n_users, n_items, k = (int(v) for v in data['dims'])
        model = FactorModel(
            P=data['P'].copy(), Q=data['Q'].copy(),
            user_ids=data['user_ids'].copy(), item_ids=data['item_ids'].copy(),
            config=SgdConfig.model_validate_json(str(data['config'])),
            trace=[float(v) for v in data['trace']],
            trained_users=data['trained_users'].copy(),
            trained_items=data['trained_items'].copy(),
        )
    if model.P.shape != (n_users, k) or model.Q.shape != (n_items, k):
        raise ValueError(f'{path}: stored dimensions do not match the factor matrices')
    return model

####################
# k sweep
####################

@dataclass
class SweepReport:
    rows: list[tuple[int, EvalReport]]
    config: SgdConfig

    @property
    def rmse_by_k(self) -> dict[int, float]:
        return {k: report.rmse for k, report in self.rows}

    @property
    def spread(self) -> float:
        values = list(self.rmse_by_k.values())
        return max(values) - min(values)

    def render(self) -> str:
        table = render_table(
            ['k', 'RMSE', 'coverage'],
            [[str(k), f'{r.rmse:.4f}', f'{r.coverage:.4f}'] for k, r in self.rows],
        )
        return f'{table}\nRMSE spread (max - min): {self.spread:.4f}\n'

    def to_record(self) -> dict:
        return {
            'report': 'sweep_k',
            'config': self.config.model_dump(mode='json', exclude={'k'}),
            'rows': [{'k': k, 'rmse': r.rmse, 'mse': r.mse, 'coverage': r.coverage} for k, r in self.rows],
            'spread': self.spread,
        }


def sweep_k(train: RatingMatrix, test: RatingMatrix, ks: Sequence[int], cfg: SgdConfig) -> SweepReport:
    """Train one model per k (same seed and settings otherwise) and score each on test."""
    if not ks:
        raise ValueError('ks must not be empty')
    rows = []
    for k in ks:
        k_cfg = cfg.model_copy(update={'k': int(k)})
        try:
            model = train_factors(train, k_cfg)
        except TrainingError as e:
            raise TrainingError(f'k={k}: {e}') from e
        report = evaluate(model, test)
        report.params['k'] = int(k)
        logger.info('k=%d: RMSE %.4f', k, report.rmse)
        rows.append((int(k), report))
    return SweepReport(rows, cfg)
