import argparse
import os
import sys

from src.logger import logger
from src.manifest import (
    RATINGS_FORMATS, Activation, Algorithm, GridMode, NetworkMode, ReportFormat, RunConfig, Weighting,
)
from cli.commands import cmd_run, run

# Define global version
MOVIEREC_VERSION = "1.0.0"

SCENARIOS_DIR = 'items'

# argparse destinations that live under RunConfig.data
DATA_FIELDS = ('ratings', 'train', 'test', 'catalog', 'features', 'attributes', 'ratings_format')

def log_application_info():
    logger.info(f"--- MOVIEREC VERSION: {MOVIEREC_VERSION} ---")

####################
# Argument types
####################

def fraction(value: str) -> float:
    try:
        result = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: '{value}'") from None
    if not 0 < result < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {value}")
    return result

def positive_int(value: str) -> int:
    try:
        result = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: '{value}'") from None
    if result < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return result

def int_list(value: str) -> list[int]:
    parts = [p.strip() for p in value.split(',') if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("expected a comma-separated list such as 3,25,75,99")
    return [positive_int(p) for p in parts]

def architecture_list(value: str) -> list[tuple[int, int]]:
    """'4x12,8x12,4x6' -> [(4, 12), (8, 12), (4, 6)]."""
    result = []
    for part in (p.strip() for p in value.split(',') if p.strip()):
        layers, sep, nodes = part.partition('x')
        if not sep:
            raise argparse.ArgumentTypeError(f"architecture '{part}' is not LAYERSxNODES")
        result.append((positive_int(layers), positive_int(nodes)))
    if not result:
        raise argparse.ArgumentTypeError("expected architectures such as 4x12,8x12")
    return result

def activation_list(value: str) -> list[Activation]:
    names = [p.strip() for p in value.split(',') if p.strip()]
    valid = [a.value for a in Activation]
    unknown = [n for n in names if n not in valid]
    if not names or unknown:
        raise argparse.ArgumentTypeError(f"activations must be drawn from {valid}")
    return [Activation(n) for n in names]

def mode_value(value: str) -> str:
    # accept per-user as well as per_user
    return value.replace('-', '_')

####################
# Parser
####################

def get_parser():
    description_text = (
        "movierec - MovieLens recommenders: neighbourhood CF, content-based, latent factors and MLP.\n\n"
        "Every report starts with the effective configuration; rerunning with it (same seed)\n"
        "reproduces the report. Logs go to stderr and logs/log_<timestamp>.txt."
    )
    epilog_text = (
        "Environment:\n"
        "  MOVIEREC_LOG_DIR    log directory (empty disables the log file)\n"
        "  MOVIEREC_LOG_LEVEL  DEBUG, INFO, WARNING...\n"
        "Scenarios under items/ can be run with: movierec.py run --scenario NAME"
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help="Seed for splits, initialisation and shuffling (default 0)")
    common.add_argument('--output', type=str, help="Write the report to this file instead of stdout")
    common.add_argument('--format', choices=[f.value for f in ReportFormat],
                        help="Report as human-readable text or a YAML record")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument('--ratings', type=str, help="Ratings file")
    data.add_argument('--train', type=str, help="Training ratings file")
    data.add_argument('--test', type=str, help="Test ratings file")
    data.add_argument('--ratings-format', dest='ratings_format', choices=list(RATINGS_FORMATS),
                      help="csv (userId,movieId,rating,timestamp), dat ('::') or tsv (u.data)")
    data.add_argument('--test-fraction', dest='test_fraction', type=fraction,
                      help="Share of ratings held out when splitting --ratings (default 0.25)")
    data.add_argument('--catalog', type=str, help="movieId,title,genres file")
    data.add_argument('--features', type=str, help="Binary item feature file (content model)")
    data.add_argument('--attributes', type=str, help="Item attribute file (neural model)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument('--algo', choices=[a.value for a in Algorithm], help="Predictor to use")
    model.add_argument('--k-neighbors', dest='k_neighbors', type=positive_int, help="Neighbourhood size (default 30)")
    model.add_argument('--weighting', choices=[w.value for w in Weighting], help="CF aggregation")
    model.add_argument('--restore-means', dest='restore_means', action='store_true', default=None,
                       help="Average centered neighbour ratings and add the target mean back")
    model.add_argument('--k', type=positive_int, help="Latent factors (default 25)")
    model.add_argument('--epochs', type=positive_int, help="SGD epochs (default 50)")
    model.add_argument('--learning-rate', dest='learning_rate', type=float, help="SGD step size (default 0.005)")
    model.add_argument('--regularization', type=float, help="L2 penalty (default 0)")
    model.add_argument('--model-path', dest='model_path', type=str,
                       help="Load factors from this .npz if it exists, else train and save there")
    model.add_argument('--hidden-layers', dest='hidden_layers', type=positive_int)
    model.add_argument('--hidden-nodes', dest='hidden_nodes', type=positive_int)
    model.add_argument('--activation', choices=[a.value for a in Activation])
    model.add_argument('--mlp-learning-rate', dest='mlp_learning_rate', type=float)
    model.add_argument('--mlp-epochs', dest='mlp_epochs', type=positive_int)
    model.add_argument('--batch-size', dest='batch_size', type=positive_int)
    model.add_argument('--network-mode', dest='network_mode', type=mode_value,
                       choices=[m.value for m in NetworkMode], help="One network for all users or one per user")

    parser = argparse.ArgumentParser(
        prog='movierec.py',
        description=description_text,
        epilog=epilog_text,
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest='subcommand', required=True)

    sub.add_parser('split', parents=[common, data], help="Write a seeded train/test split of --ratings")
    sub.add_parser('evaluate', parents=[common, data, model], help="Train on train, report RMSE on test")

    recommend = sub.add_parser('recommend', parents=[common, data, model], help="Top-N unrated items for a user")
    recommend.add_argument('--user', type=int, required=True)
    recommend.add_argument('--n', type=positive_int, help="List length (default 10)")

    sweep = sub.add_parser('sweep-k', parents=[common, data, model], help="Latent factor RMSE for several k")
    sweep.add_argument('--ks', type=int_list, help="Comma-separated k values (default 3,25,75,99)")

    grid = sub.add_parser('nn-grid', parents=[common, data, model], help="Activation x architecture MSE grid")
    grid.add_argument('--mode', dest='grid_mode', type=mode_value, choices=[m.value for m in GridMode])
    grid.add_argument('--activations', type=activation_list, help="e.g. relu,logistic,identity,tanh")
    grid.add_argument('--architectures', type=architecture_list, help="e.g. 4x12,8x12,4x6")
    grid.add_argument('--max-users', dest='max_users', type=positive_int, help="Users in the subset (default 9)")

    scenario = sub.add_parser('run', parents=[common], help="Run items/<scenario>/conf.yaml")
    scenario.add_argument('--scenario', type=str, required=True, help="Name of the scenario directory")

    return parser

def resolve_scenario(parser, name):
    scenario_path = os.path.join(SCENARIOS_DIR, name)
    if not os.path.isdir(scenario_path):
        available_scenarios = sorted(d for d in os.listdir(SCENARIOS_DIR)
                                     if os.path.isdir(os.path.join(SCENARIOS_DIR, d)))
        parser.error(f"unknown scenario '{name}', available: {', '.join(available_scenarios)}")
    if not os.path.isfile(os.path.join(scenario_path, 'conf.yaml')):
        parser.error(f"The configuration file 'conf.yaml' does not exist in the scenario directory {scenario_path}")
    return scenario_path

def to_run_config(args) -> RunConfig:
    """Only flags the user actually passed override RunConfig defaults."""
    values = {k: v for k, v in vars(args).items() if v is not None}
    data = {k: values.pop(k) for k in DATA_FIELDS if k in values}
    return RunConfig(data=data, **values)

def get_args(argv=None):
    parser = get_parser()
    args = parser.parse_args(argv)
    if args.subcommand == 'run':
        args.scenario = resolve_scenario(parser, args.scenario)

    logger.info("Arguments provided:")
    for arg, value in vars(args).items():
        if value is not None:
            logger.info(f"{arg}: {value}")
    return args

def main(argv=None) -> int:
    log_application_info()

    args = get_args(argv)

    try:
        if args.subcommand == 'run':
            overrides = {k: getattr(args, k) for k in ('seed', 'output', 'format') if getattr(args, k) is not None}
            return cmd_run(args.scenario, overrides)
        return run(to_run_config(args))
    except Exception as e:
        logger.error(f"{args.subcommand} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1

if __name__ == "__main__":
    sys.exit(main())
