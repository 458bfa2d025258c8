from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from cf.neighborhood import Predictor, clamp_rating
from dataset.dataset import RATING_MAX, RATING_MIN, RatingMatrix
from src.errors import InsufficientDataError, RecommenderError
from src.logger import logger
from .report import RULE, render_table

MIDPOINT = (RATING_MIN + RATING_MAX) / 2


def _paired(predictions: Sequence[float], truths: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    o = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(truths, dtype=np.float64).ravel()
    if o.shape != t.shape:
        raise ValueError(f'predictions and truths differ in length: {o.size} vs {t.size}')
    if o.size == 0:
        raise ValueError('cannot score an empty prediction list')
    return o, t


def mse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    """(1/n) * sum((o_i - t_i)^2)."""
    o, t = _paired(predictions, truths)
    return float(np.mean((o - t) ** 2))


def rmse(predictions: Sequence[float], truths: Sequence[float]) -> float:
    """Square root of mse."""
    return float(np.sqrt(mse(predictions, truths)))


@dataclass
class EvalReport:
    """
    Holdout scores of one predictor.

    coverage is the share of test pairs predicted with support; fallbacks
    and failures (pairs whose prediction raised) are both excluded from it
    but still enter rmse/mse through their fallback value.
    """
    name: str
    n: int
    rmse: float
    mse: float
    coverage: float
    fallbacks: int
    failures: int = 0
    params: dict[str, Any] = field(default_factory=dict)

    def render(self) -> str:
        label = ', '.join(f'{k}={v}' for k, v in self.params.items())
        lines = [RULE, f'Predictor: {self.name}' + (f' ({label})' if label else ''), RULE]
        lines.append(render_table(
            ['metric', 'value'],
            [
                ['test pairs', str(self.n)],
                ['RMSE', f'{self.rmse:.4f}'],
                ['MSE', f'{self.mse:.4f}'],
                ['coverage', f'{self.coverage:.4f}'],
                ['fallbacks', str(self.fallbacks)],
                ['failures', str(self.failures)],
            ],
        ))
        return '\n'.join(lines) + '\n'

    def to_record(self) -> dict:
        return {
            'report': 'evaluate',
            'predictor': self.name,
            'params': dict(self.params),
            'n': self.n,
            'rmse': self.rmse,
            'mse': self.mse,
            'coverage': self.coverage,
            'fallbacks': self.fallbacks,
            'failures': self.failures,
        }


def _fallback_value(predictor: Predictor, user_id: int, item_id: int) -> float:
    try:
        return float(predictor.fallback(user_id, item_id))
    except RecommenderError:
        return clamp_rating(MIDPOINT)


def evaluate(predictor: Predictor, test: RatingMatrix) -> EvalReport:
    """
    Score every test rating in stored (file) order.

    A pair whose prediction raises a RecommenderError is counted as a
    failure and scored with the predictor's fallback; the run goes on.
    """
    if test.nnz == 0:
        raise InsufficientDataError('test split has no ratings')

    predicted = np.empty(test.nnz)
    fallbacks = 0
    failures = 0
    for pos, (u, i) in enumerate(zip(test.users, test.items)):
        user_id = int(test.user_ids[u])
        item_id = int(test.item_ids[i])
        try:
            prediction = predictor.predict(user_id, item_id)
        except RecommenderError as e:
            failures += 1
            logger.debug('%s failed on (%d, %d): %s', predictor.name, user_id, item_id, e)
            predicted[pos] = _fallback_value(predictor, user_id, item_id)
            continue
        if prediction.is_fallback:
            fallbacks += 1
        predicted[pos] = prediction.value

    score = mse(predicted, test.ratings)
    report = EvalReport(
        name=predictor.name,
        n=test.nnz,
        rmse=float(np.sqrt(score)),
        mse=score,
        coverage=(test.nnz - fallbacks - failures) / test.nnz,
        fallbacks=fallbacks,
        failures=failures,
    )
    if failures:
        logger.warning('%s: %d of %d test pairs failed and were scored by fallback',
                       predictor.name, failures, test.nnz)
    logger.info('%s: RMSE %.4f over %d pairs, coverage %.4f', report.name, report.rmse, report.n, report.coverage)
    return report
