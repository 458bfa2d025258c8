import io
import os
import shutil

import pytest
import yaml

from cli.commands import cmd_run
from movierec import architecture_list, get_args, int_list, main, to_run_config
from src.manifest import Activation, Algorithm, GridMode, RunConfig, read_experiment_manifest

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FOUR_USERS_SCENARIO = os.path.join(REPO_ROOT, 'items', 'four_users')


@pytest.fixture
def four_users(tmp_path):
    for name in ('ratings.csv', 'movies.csv', 'features.csv'):
        shutil.copy(os.path.join(FOUR_USERS_SCENARIO, name), tmp_path / name)
    return tmp_path


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_split_writes_both_parts(four_users, capsys):
    code, out = run_cli(capsys, 'split', '--ratings', four_users / 'ratings.csv', '--seed', 7)
    assert code == 0
    assert 'train: 8 ratings' in out.out
    assert 'test: 2 ratings' in out.out
    assert (four_users / 'ratings.train.csv').is_file()
    assert (four_users / 'ratings.test.csv').is_file()

    code, out = run_cli(capsys, 'evaluate', '--algo', 'user-cf',
                        '--train', four_users / 'ratings.train.csv', '--test', four_users / 'ratings.test.csv')
    assert code == 0
    assert ['test', 'pairs', '2'] in [line.split() for line in out.out.splitlines()]


def test_evaluate_user_cf(four_users, capsys):
    code, out = run_cli(capsys, 'evaluate', '--algo', 'user-cf', '--ratings', four_users / 'ratings.csv')
    assert code == 0
    assert 'Predictor: user-cf (k_neighbors=30, weighting=weighted, restore_means=False)' in out.out
    assert 'RMSE' in out.out
    assert out.out.startswith('subcommand: evaluate')


def test_evaluate_svd_reports_k(four_users, capsys):
    code, out = run_cli(capsys, 'evaluate', '--algo', 'svd', '--k', 3, '--epochs', 5,
                        '--ratings', four_users / 'ratings.csv')
    assert code == 0
    assert 'Predictor: svd (k=3,' in out.out


def test_evaluate_content_needs_features(four_users, capsys):
    code, out = run_cli(capsys, 'evaluate', '--algo', 'content', '--ratings', four_users / 'ratings.csv')
    assert code == 1
    assert '--features' in out.err
    code, out = run_cli(capsys, 'evaluate', '--algo', 'content', '--ratings', four_users / 'ratings.csv',
                        '--features', four_users / 'features.csv')
    assert code == 0


def test_model_path_round_trip(four_users, capsys):
    model_path = four_users / 'models' / 'svd.npz'
    args = ['evaluate', '--algo', 'svd', '--k', 2, '--epochs', 5, '--ratings', four_users / 'ratings.csv',
            '--model-path', model_path]
    _, first = run_cli(capsys, *args)
    assert model_path.is_file()
    _, second = run_cli(capsys, *args)
    assert first.out == second.out


def test_model_path_rejects_other_settings(four_users, capsys):
    model_path = four_users / 'models' / 'svd.npz'
    args = ['evaluate', '--algo', 'svd', '--epochs', 5, '--ratings', four_users / 'ratings.csv',
            '--model-path', model_path]
    code, _ = run_cli(capsys, *args, '--k', 2)
    assert code == 0
    code, out = run_cli(capsys, *args, '--k', 3)
    assert code == 1
    assert 'k=2' in out.err
    assert 'Predictor: svd' not in out.out


def test_recommend_four_users(four_users, capsys):
    code, out = run_cli(capsys, 'recommend', '--algo', 'user-cf', '--k-neighbors', 2, '--user', 1,
                        '--ratings', four_users / 'ratings.csv', '--catalog', four_users / 'movies.csv')
    assert code == 0
    lines = out.out.splitlines()
    assert lines[-2] == 'Top 1 for user 1 (user-cf)'
    assert lines[-1] == '1. Movie Two (1996) Action - 5.0000'


def test_recommend_limits_list(four_users, capsys):
    code, out = run_cli(capsys, 'recommend', '--algo', 'user-cf', '--user', 3, '--n', 1,
                        '--ratings', four_users / 'ratings.csv')
    assert code == 0
    ranked = [line for line in out.out.splitlines() if line[:1].isdigit()]
    assert len(ranked) == 1
    assert ranked[0].startswith('1. Movie 2 - ')


def test_recommend_unknown_user(four_users, capsys):
    code, out = run_cli(capsys, 'recommend', '--algo', 'user-cf', '--user', 42,
                        '--ratings', four_users / 'ratings.csv')
    assert code == 1
    assert 'unknown user id 42' in out.err


def test_sweep_k(four_users, capsys):
    code, out = run_cli(capsys, 'sweep-k', '--ks', '1,2', '--epochs', 3, '--ratings', four_users / 'ratings.csv')
    assert code == 0
    assert 'RMSE spread (max - min)' in out.out


def test_nn_grid_per_user(four_users, capsys):
    code, out = run_cli(capsys, 'nn-grid', '--mode', 'per-user', '--activations', 'tanh', '--mlp-epochs', 2,
                        '--ratings', four_users / 'ratings.csv', '--catalog', four_users / 'movies.csv')
    assert code == 0
    assert 'MSE with one neural network for each user' in out.out
    assert 'Hidden Layers: 4 Hidden Nodes: 12' in out.out
    assert out.out.rstrip().splitlines()[-1].startswith('tanh')


def test_nn_grid_record(four_users, capsys):
    code, out = run_cli(capsys, 'nn-grid', '--mode', 'both', '--activations', 'relu,tanh',
                        '--architectures', '1x3', '--mlp-epochs', 2, '--format', 'record',
                        '--ratings', four_users / 'ratings.csv', '--catalog', four_users / 'movies.csv')
    assert code == 0
    record = yaml.safe_load(out.out)
    assert record['report'] == 'nn_grid'
    assert record['config']['grid_mode'] == 'both'
    assert set(record) >= {'global', 'per_user', 'per_user_better'}


def test_record_format_and_output_file(four_users, capsys):
    target = four_users / 'reports' / 'evaluate.yaml'
    code, out = run_cli(capsys, 'evaluate', '--algo', 'item-cf', '--ratings', four_users / 'ratings.csv',
                        '--format', 'record', '--output', target)
    assert code == 0
    assert out.out == ''
    record = yaml.safe_load(target.read_text())
    assert record['config']['seed'] == 0
    assert record['report'] == 'evaluate'
    assert record['predictor'] == 'item-cf'


@pytest.mark.parametrize('argv', [
    ['evaluate', '--algo', 'user-cf', '--test-fraction', '1.5'],
    ['sweep-k', '--ks', ''],
    ['evaluate', '--algo', 'nope'],
    ['recommend', '--algo', 'user-cf'],
    ['nn-grid', '--architectures', '4by12'],
    ['run', '--scenario', 'no_such_scenario'],
])
def test_usage_errors_exit_2(argv, monkeypatch):
    monkeypatch.chdir(REPO_ROOT)
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_missing_file_exits_1(tmp_path, capsys):
    code, out = run_cli(capsys, 'evaluate', '--algo', 'user-cf', '--ratings', tmp_path / 'missing.csv')
    assert code == 1
    assert 'Error:' in out.err


def test_reruns_are_byte_identical(four_users, capsys):
    for algo in ('user-cf', 'svd'):
        args = ['evaluate', '--algo', algo, '--epochs', 5, '--seed', 3, '--ratings', four_users / 'ratings.csv']
        _, first = run_cli(capsys, *args)
        _, second = run_cli(capsys, *args)
        assert first.out == second.out


def test_argument_types():
    assert int_list('3, 25,75') == [3, 25, 75]
    assert architecture_list('4x12,4x6') == [(4, 12), (4, 6)]
    args = get_args(['nn-grid', '--mode', 'per-user', '--activations', 'relu,tanh', '--seed', '4'])
    cfg = to_run_config(args)
    assert cfg.grid_mode == GridMode.PER_USER
    assert cfg.activations == [Activation.RELU, Activation.TANH]
    assert cfg.seed == 4
    assert cfg.k == 25


def test_run_scenario(monkeypatch, capsys):
    monkeypatch.chdir(REPO_ROOT)
    code, out = run_cli(capsys, 'run', '--scenario', 'four_users')
    assert code == 0
    assert out.out.splitlines()[-1] == '1. Movie Two (1996) Action - 5.0000'


def test_cmd_run_overrides(tmp_path):
    target = tmp_path / 'report.yaml'
    assert cmd_run(FOUR_USERS_SCENARIO, {'format': 'record', 'output': str(target)}) == 0
    record = yaml.safe_load(target.read_text())
    assert record['report'] == 'recommend'
    assert record['items'][0]['item'] == 2


def test_manifest_resolves_paths():
    with open(os.path.join(FOUR_USERS_SCENARIO, 'conf.yaml')) as file:
        manifest = read_experiment_manifest(file)
    cfg = manifest.to_run_config(FOUR_USERS_SCENARIO)
    assert isinstance(cfg, RunConfig)
    assert cfg.subcommand == 'recommend'
    assert cfg.algo == Algorithm.USER_CF
    assert cfg.data.ratings == os.path.join(FOUR_USERS_SCENARIO, 'ratings.csv')


@pytest.mark.parametrize('text', [
    "kind: perf\ndata: {}\n",
    "- evaluate\n",
])
def test_manifest_rejects_unknown_kind(text):
    with pytest.raises(ValueError):
        read_experiment_manifest(io.StringIO(text))
