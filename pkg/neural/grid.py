from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from dataset.dataset import RatingMatrix
from evaluation.report import render_table
from src.errors import InsufficientDataError, TrainingError
from src.logger import logger
from src.manifest import Activation, MLPConfig, NetworkMode
from .encoding import FeatureEncoder, encode_examples
from .neural import mlp_mse, train_mlp

GLOBAL_CELL_USER = 0


def architecture_label(arch: tuple[int, int]) -> str:
    layers, nodes = arch
    return f'Hidden Layers: {layers} Hidden Nodes: {nodes}'


def cell_seed(seed: int, act_index: int, arch_index: int, user_id: int = GLOBAL_CELL_USER) -> int:
    """Seed of one grid cell, independent of the order cells are run in."""
    return int(np.random.SeedSequence([seed, act_index, arch_index, user_id]).generate_state(1)[0])


def select_users(m: RatingMatrix, max_users: int) -> list[int]:
    """The `max_users` lowest user ids that have at least one rating."""
    rated = m.user_ids[m.user_counts() > 0]
    return [int(u) for u in rated[:max_users]]


@dataclass
class GridReport:
    """Test MSE per (activation, architecture); rows are activations."""
    mode: NetworkMode
    activations: list[Activation]
    architectures: list[tuple[int, int]]
    mse: dict[tuple[Activation, tuple[int, int]], float]
    users: list[int] = field(default_factory=list)

    def cell(self, activation: Activation, arch: tuple[int, int]) -> float:
        return self.mse[(Activation(activation), tuple(arch))]

    @property
    def best(self) -> float:
        return min(self.mse.values())

    def title(self) -> str:
        if self.mode == NetworkMode.GLOBAL:
            return 'MSE with one neural network for all users'
        return 'MSE with one neural network for each user'

    def render(self) -> str:
        rows = [
            [a.value] + [f'{self.cell(a, arch):.2f}' for arch in self.architectures]
            for a in self.activations
        ]
        table = render_table(['activation'] + [architecture_label(a) for a in self.architectures], rows)
        users = ', '.join(str(u) for u in self.users)
        return f'{self.title()} (users: {users})\n{table}\n'

    def to_record(self) -> dict:
        return {
            'mode': self.mode.value,
            'users': list(self.users),
            'architectures': [list(a) for a in self.architectures],
            'mse': {a.value: [self.cell(a, arch) for arch in self.architectures] for a in self.activations},
            'best': self.best,
        }


@dataclass
class GridComparison:
    """Global and per-user grids over the same users and data."""
    global_grid: GridReport
    per_user_grid: GridReport

    @property
    def per_user_better(self) -> bool:
        return self.per_user_grid.best < self.global_grid.best

    def render(self) -> str:
        verdict = 'yes' if self.per_user_better else 'no'
        return (f'{self.global_grid.render()}\n{self.per_user_grid.render()}\n'
                f'Per-user min MSE below global min MSE: {verdict} '
                f'({self.per_user_grid.best:.4f} vs {self.global_grid.best:.4f})\n')

    def to_record(self) -> dict:
        return {
            'report': 'nn_grid',
            'global': self.global_grid.to_record(),
            'per_user': self.per_user_grid.to_record(),
            'per_user_better': self.per_user_better,
        }


def _train_cell(cfg: MLPConfig, train_examples, test_examples, seed: int, where: str) -> float:
    try:
        model = train_mlp(cfg, train_examples, seed=seed)
    except TrainingError as e:
        raise TrainingError(f'{where}: {e}') from e
    return mlp_mse(model, test_examples)


def grid_experiment(train: RatingMatrix, test: RatingMatrix, attributes: pd.DataFrame,
                    mode: NetworkMode, activations: Sequence[Activation],
                    architectures: Sequence[tuple[int, int]], base: Optional[MLPConfig] = None,
                    max_users: int = 9) -> GridReport:
    """
    Train one network per grid cell and report its test MSE.

    Only the first `max_users` users of train are used. In global mode a
    single network per cell sees all of them (user id as an input); in
    per-user mode every user gets a network per cell and the cell holds
    the mean of their MSEs over users with test examples.
    """
    if not activations or not architectures:
        raise ValueError('activation and architecture grids must not be empty')
    base = base or MLPConfig()
    mode = NetworkMode(mode)
    users = select_users(train, max_users)
    if not users:
        raise InsufficientDataError('training split has no users')
    train = train.restrict_users(users)
    test = test.restrict_users(users)

    encoder = FeatureEncoder(attributes, include_user=mode == NetworkMode.GLOBAL)
    train_examples = encode_examples(train, encoder, fit=True)
    test_examples = encode_examples(test, encoder)
    if not train_examples or not test_examples:
        raise InsufficientDataError('selected users have no encodable train or test ratings')

    if mode == NetworkMode.GLOBAL:
        groups = {GLOBAL_CELL_USER: (train_examples, test_examples)}
    else:
        groups = {}
        for user in users:
            own_train = [e for e in train_examples if e.user_id == user]
            own_test = [e for e in test_examples if e.user_id == user]
            if own_train and own_test:
                groups[user] = (own_train, own_test)
        if not groups:
            raise InsufficientDataError('no user has both train and test examples')
    logger.info('Grid (%s): %d activations x %d architectures over users %s',
                mode.value, len(activations), len(architectures), users)

    cells = {}
    for a_idx, act in enumerate(activations):
        act = Activation(act)
        for arch_idx, arch in enumerate(architectures):
            layers, nodes = arch
            cfg = base.model_copy(update={'hidden_layers': layers, 'hidden_nodes': nodes,
                                          'activation': act, 'mode': mode})
            scores = [
                _train_cell(cfg, group_train, group_test, cell_seed(base.seed, a_idx, arch_idx, user),
                            f'{act.value} / {layers}x{nodes}' + (f' / user {user}' if mode == NetworkMode.PER_USER else ''))
                for user, (group_train, group_test) in groups.items()
            ]
            cells[(act, (layers, nodes))] = float(np.mean(scores))
            logger.info('%s %dx%d: MSE %.4f', act.value, layers, nodes, cells[(act, (layers, nodes))])

    return GridReport(mode, [Activation(a) for a in activations],
                      [tuple(a) for a in architectures], cells, users)


def compare_modes(train: RatingMatrix, test: RatingMatrix, attributes: pd.DataFrame,
                  activations: Sequence[Activation], architectures: Sequence[tuple[int, int]],
                  base: Optional[MLPConfig] = None, max_users: int = 9) -> GridComparison:
    """Run both modes on the same users; the per-user advantage is reported, not enforced."""
    global_grid = grid_experiment(train, test, attributes, NetworkMode.GLOBAL,
                                  activations, architectures, base, max_users)
    per_user_grid = grid_experiment(train, test, attributes, NetworkMode.PER_USER,
                                    activations, architectures, base, max_users)
    comparison = GridComparison(global_grid, per_user_grid)
    if not comparison.per_user_better:
        logger.warning('Per-user networks did not beat the global network (%.4f vs %.4f)',
                       per_user_grid.best, global_grid.best)
    return comparison
