import os
import pprint

from cf.neighborhood import Baseline, CfModel, Predictor, recommend_top_n
from content.content_based import ContentModel
from dataset.catalog import ItemCatalog, attributes_from_catalog, load_catalog, load_features, load_item_attributes
from dataset.dataset import RatingMatrix, holdout_split, load_ratings, load_split, save_ratings
from evaluation.evaluation import evaluate
from evaluation.report import RULE, dump_record, emit
from factorization.factorization import load_factor_model, save_factor_model, sweep_k, train_factors
from neural.encoding import MLPPredictor
from neural.grid import compare_modes, grid_experiment
from src.logger import logger
from src.manifest import (
    RATINGS_FORMATS, Algorithm, Axis, GridMode, NetworkMode, ReportFormat, RunConfig,
    read_experiment_manifest,
)

####################
# Data loading
####################

def _ratings_format(cfg: RunConfig):
    return RATINGS_FORMATS[cfg.data.ratings_format]


def load_train_test(cfg: RunConfig) -> tuple[RatingMatrix, RatingMatrix]:
    """Train/test files when both are given, else a seeded holdout of the ratings file."""
    fmt = _ratings_format(cfg)
    if cfg.data.train and cfg.data.test:
        return load_split(cfg.data.train, cfg.data.test, fmt)
    if cfg.data.ratings:
        return holdout_split(load_ratings(cfg.data.ratings, fmt), cfg.test_fraction, cfg.seed)
    raise ValueError(f'{cfg.subcommand} needs --train and --test, or --ratings')


def load_training(cfg: RunConfig) -> RatingMatrix:
    """All known ratings for recommendation: the ratings file, else the train file."""
    fmt = _ratings_format(cfg)
    if cfg.data.ratings:
        return load_ratings(cfg.data.ratings, fmt)
    if cfg.data.train:
        return load_ratings(cfg.data.train, fmt)
    raise ValueError(f'{cfg.subcommand} needs --ratings or --train')


def load_attributes(cfg: RunConfig):
    if cfg.data.attributes:
        return load_item_attributes(cfg.data.attributes)
    if cfg.data.catalog:
        return attributes_from_catalog(load_catalog(cfg.data.catalog))
    raise ValueError('the neural model needs --attributes or --catalog')


def load_titles(cfg: RunConfig) -> ItemCatalog:
    if cfg.data.catalog:
        return load_catalog(cfg.data.catalog)
    return ItemCatalog({})

####################
# Models
####################

def model_params(cfg: RunConfig) -> dict:
    """Hyperparameters that label a report for the selected algorithm."""
    if cfg.algo in (Algorithm.USER_CF, Algorithm.ITEM_CF):
        return {'k_neighbors': cfg.k_neighbors, 'weighting': cfg.weighting.value,
                'restore_means': cfg.restore_means}
    if cfg.algo == Algorithm.CONTENT:
        return {'k_neighbors': cfg.k_neighbors}
    if cfg.algo == Algorithm.SVD:
        return {'k': cfg.k, 'epochs': cfg.epochs, 'learning_rate': cfg.learning_rate,
                'regularization': cfg.regularization, 'seed': cfg.seed}
    return {'hidden_layers': cfg.hidden_layers, 'hidden_nodes': cfg.hidden_nodes,
            'activation': cfg.activation.value, 'mode': cfg.network_mode.value, 'seed': cfg.seed}


def _factor_model(cfg: RunConfig, train: RatingMatrix):
    if cfg.model_path and os.path.isfile(cfg.model_path):
        model = load_factor_model(cfg.model_path)
        wanted = cfg.sgd_config()
        if model.config != wanted:
            changed = sorted(name for name, value in wanted if getattr(model.config, name) != value)
            stored = ', '.join(f'{name}={getattr(model.config, name)}' for name in changed)
            raise ValueError(f'{cfg.model_path} was trained with {stored}; '
                             f'pass matching settings or a new --model-path')
        logger.info('Loaded factor model (k=%d) from %s', model.k, cfg.model_path)
        if model.train is None:
            model.train = train
            model.baseline = Baseline(train)
        return model
    model = train_factors(train, cfg.sgd_config())
    if cfg.model_path:
        save_factor_model(model, cfg.model_path)
    return model


def build_predictor(cfg: RunConfig, train: RatingMatrix) -> Predictor:
    if cfg.algo is None:
        raise ValueError(f'{cfg.subcommand} needs --algo')
    if cfg.algo in (Algorithm.USER_CF, Algorithm.ITEM_CF):
        axis = Axis.USER if cfg.algo == Algorithm.USER_CF else Axis.ITEM
        return CfModel(train, axis, cfg.k_neighbors, cfg.weighting, cfg.restore_means)
    if cfg.algo == Algorithm.CONTENT:
        if not cfg.data.features:
            raise ValueError('the content model needs --features')
        return ContentModel(train, load_features(cfg.data.features), cfg.k_neighbors)
    if cfg.algo == Algorithm.SVD:
        return _factor_model(cfg, train)
    return MLPPredictor(train, load_attributes(cfg), cfg.mlp_config())

####################
# Output
####################

def write_report(cfg: RunConfig, report):
    """Effective configuration followed by the report, as text or a YAML record."""
    if cfg.format == ReportFormat.RECORD:
        record = {'config': cfg.model_dump(mode='json')}
        record.update(report.to_record())
        emit(dump_record(record), cfg.output)
        return
    header = '\n'.join(cfg.echo())
    emit(f'{header}\n{RULE}\n{report.render()}', cfg.output)

####################
# Subcommands
####################

def cmd_split(cfg: RunConfig) -> int:
    if not cfg.data.ratings:
        raise ValueError('split needs --ratings')
    fmt = _ratings_format(cfg)
    train, test = holdout_split(load_ratings(cfg.data.ratings, fmt), cfg.test_fraction, cfg.seed)

    stem, ext = os.path.splitext(cfg.data.ratings)
    train_path = cfg.data.train or f'{stem}.train{ext or ".csv"}'
    test_path = cfg.data.test or f'{stem}.test{ext or ".csv"}'
    for path, part in ((train_path, train), (test_path, test)):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        save_ratings(part, path, fmt)

    lines = cfg.echo() + [RULE, f'train: {train.nnz} ratings -> {train_path}',
                          f'test: {test.nnz} ratings -> {test_path}']
    emit('\n'.join(lines), cfg.output)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    train, test = load_train_test(cfg)
    predictor = build_predictor(cfg, train)
    report = evaluate(predictor, test)
    report.params.update(model_params(cfg))
    write_report(cfg, report)
    return 0


class Recommendations:
    def __init__(self, user: int, predictor: Predictor, ranked: list[tuple[int, float]], catalog: ItemCatalog):
        self.user = user
        self.predictor = predictor
        self.ranked = ranked
        self.catalog = catalog

    def render(self) -> str:
        lines = [f'Top {len(self.ranked)} for user {self.user} ({self.predictor.name})']
        for rank, (item, value) in enumerate(self.ranked, start=1):
            lines.append(f'{rank}. {self.catalog.describe(item)} - {value:.4f}')
        return '\n'.join(lines) + '\n'

    def to_record(self) -> dict:
        return {
            'report': 'recommend',
            'user': self.user,
            'predictor': self.predictor.name,
            'items': [
                {'rank': rank, 'item': item, 'title': self.catalog.describe(item), 'predicted': value}
                for rank, (item, value) in enumerate(self.ranked, start=1)
            ],
        }


def cmd_recommend(cfg: RunConfig) -> int:
    if cfg.user is None:
        raise ValueError('recommend needs --user')
    train = load_training(cfg)
    predictor = build_predictor(cfg, train)
    ranked = recommend_top_n(predictor, cfg.user, cfg.n)
    write_report(cfg, Recommendations(cfg.user, predictor, ranked, load_titles(cfg)))
    return 0


def cmd_sweep_k(cfg: RunConfig) -> int:
    train, test = load_train_test(cfg)
    write_report(cfg, sweep_k(train, test, cfg.ks, cfg.sgd_config()))
    return 0


class _SingleGrid:
    def __init__(self, grid):
        self.grid = grid

    def render(self) -> str:
        return self.grid.render()

    def to_record(self) -> dict:
        return {'report': 'nn_grid', self.grid.mode.value: self.grid.to_record()}


def cmd_nn_grid(cfg: RunConfig) -> int:
    train, test = load_train_test(cfg)
    attributes = load_attributes(cfg)
    base = cfg.mlp_config()
    if cfg.grid_mode == GridMode.BOTH:
        report = compare_modes(train, test, attributes, cfg.activations, cfg.architectures, base, cfg.max_users)
    else:
        report = _SingleGrid(grid_experiment(train, test, attributes, NetworkMode(cfg.grid_mode.value),
                                             cfg.activations, cfg.architectures, base, cfg.max_users))
    write_report(cfg, report)
    return 0


COMMANDS = {
    'split': cmd_split,
    'evaluate': cmd_evaluate,
    'recommend': cmd_recommend,
    'sweep-k': cmd_sweep_k,
    'nn-grid': cmd_nn_grid,
}


def get_experiment_manifest(path):
    with open(path, 'r') as file:
        manifest = read_experiment_manifest(file)

        logger.info(f"--- Manifest Kind: {manifest.kind} ---")
        logger.info(pprint.pformat(manifest.model_dump()))
        logger.info("--- End of Manifest ---")

        return manifest


def cmd_run(scenario_path: str, overrides: dict | None = None) -> int:
    """Run the experiment described by <scenario_path>/conf.yaml."""
    manifest = get_experiment_manifest(os.path.join(scenario_path, 'conf.yaml'))
    if manifest.description:
        logger.info(manifest.description.strip())
    cfg = manifest.to_run_config(scenario_path)
    if overrides:
        cfg = RunConfig(**{**cfg.model_dump(), **overrides})
    return run(cfg)


def run(cfg: RunConfig) -> int:
    logger.info("Effective configuration:")
    for line in cfg.echo():
        logger.info(line)
    return COMMANDS[cfg.subcommand](cfg)
