import logging
import os
import tempfile
import unittest
from unittest.mock import MagicMock, patch

from cf.neighborhood import Prediction
from dataset.dataset import RatingMatrix
from evaluation.evaluation import evaluate
from src.errors import (
    DuplicateEntryError, InputLineError, InsufficientDataError, RatingDomainError, RatingParseError,
    RecommenderError, TrainingError, UnknownIdError,
)
from src.logger import LOGGER_NAME, logger, setup_logging


class TestSetupLogging(unittest.TestCase):
    def setUp(self):
        self.logs_dir = tempfile.mkdtemp()
        self.name = f'{LOGGER_NAME}.test_{id(self)}'

        patcher = patch('src.logger.LOGGER_NAME', self.name)
        self.addCleanup(patcher.stop)
        patcher.start()

    def tearDown(self):
        test_logger = logging.getLogger(self.name)
        for handler in list(test_logger.handlers):
            handler.close()
            test_logger.removeHandler(handler)

    def test_file_and_stream_handlers(self):
        with patch.dict(os.environ, {'MOVIEREC_LOG_DIR': self.logs_dir, 'MOVIEREC_LOG_LEVEL': 'debug'}):
            test_logger = setup_logging('2024-01-01_00-00-00')

        self.assertEqual(test_logger.level, logging.DEBUG)
        self.assertEqual(len(test_logger.handlers), 2)
        self.assertTrue(os.path.isfile(os.path.join(self.logs_dir, 'log_2024-01-01_00-00-00.txt')))

    def test_empty_log_dir_disables_file(self):
        with patch.dict(os.environ, {'MOVIEREC_LOG_DIR': ''}):
            test_logger = setup_logging('unused')

        self.assertEqual(len(test_logger.handlers), 1)
        self.assertIsInstance(test_logger.handlers[0], logging.StreamHandler)

    def test_handlers_are_not_stacked(self):
        with patch.dict(os.environ, {'MOVIEREC_LOG_DIR': ''}):
            first = setup_logging('a')
            second = setup_logging('b')

        self.assertIs(first, second)
        self.assertEqual(len(second.handlers), 1)


class TestErrors(unittest.TestCase):
    def test_builtin_bases(self):
        self.assertTrue(issubclass(RatingParseError, ValueError))
        self.assertTrue(issubclass(UnknownIdError, KeyError))
        self.assertTrue(issubclass(TrainingError, RuntimeError))
        for error in (RatingParseError, DuplicateEntryError, UnknownIdError, InsufficientDataError, TrainingError):
            self.assertTrue(issubclass(error, RecommenderError))

    def test_messages(self):
        self.assertEqual(str(RatingParseError('bad row', 7)), 'line 7: bad row')
        self.assertEqual(RatingParseError('bad row', 7).line, 7)
        self.assertEqual(str(UnknownIdError('unknown user id 3')), 'unknown user id 3')

    def test_line_numbers_share_one_base(self):
        for error in (RatingParseError, RatingDomainError, DuplicateEntryError):
            self.assertTrue(issubclass(error, InputLineError))
            self.assertEqual(str(error('bad', 3)), 'line 3: bad')
            self.assertIsNone(error('bad').line)
            self.assertEqual(str(error('bad')), 'bad')


class TestEvaluateLogging(unittest.TestCase):
    def setUp(self):
        self.test = RatingMatrix.from_arrays([1, 2], [10, 20], [4, 2])
        self.predictor = MagicMock()
        self.predictor.name = 'stub'
        self.predictor.fallback.return_value = 3.0

    def test_failures_are_logged(self):
        self.predictor.predict.side_effect = UnknownIdError('unknown item id 20')

        with self.assertLogs(logger, level='WARNING') as logs:
            report = evaluate(self.predictor, self.test)

        self.assertEqual(report.failures, 2)
        self.assertIn('2 of 2 test pairs failed', logs.output[0])

    def test_summary_is_logged(self):
        self.predictor.predict.side_effect = lambda u, i: Prediction(u, i, 3.0, 1)

        with self.assertLogs(logger, level='INFO') as logs:
            evaluate(self.predictor, self.test)

        self.assertTrue(any('stub: RMSE 1.0000 over 2 pairs' in line for line in logs.output))


if __name__ == '__main__':
    unittest.main()
