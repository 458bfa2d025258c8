import os
from enum import Enum
from typing import Any, List, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

kind_options = ['evaluate', 'recommend', 'sweep_k', 'nn_grid']

# Default k sweep and hidden-layer grid
DEFAULT_KS = [3, 25, 75, 99]
DEFAULT_ARCHITECTURES = [(4, 12), (8, 12), (4, 6)]

####################
# Enumerations
####################

class Axis(str, Enum):
    USER = 'user'
    ITEM = 'item'

class Weighting(str, Enum):
    SIMPLE = 'simple'
    WEIGHTED = 'weighted'

class Algorithm(str, Enum):
    USER_CF = 'user-cf'
    ITEM_CF = 'item-cf'
    CONTENT = 'content'
    SVD = 'svd'
    MLP = 'mlp'

class Activation(str, Enum):
    RELU = 'relu'
    LOGISTIC = 'logistic'
    IDENTITY = 'identity'
    TANH = 'tanh'

class NetworkMode(str, Enum):
    GLOBAL = 'global'
    PER_USER = 'per_user'

class GridMode(str, Enum):
    GLOBAL = 'global'
    PER_USER = 'per_user'
    BOTH = 'both'

class ReportFormat(str, Enum):
    TEXT = 'text'
    RECORD = 'record'

DEFAULT_ACTIVATIONS = [Activation.RELU, Activation.LOGISTIC, Activation.IDENTITY, Activation.TANH]

####################
# Input formats
####################

class RatingsFormat(BaseModel):
    model_config = ConfigDict(frozen=True)

    delimiter: str = ','
    """Field separator, e.g. ',' for ratings.csv or '::' for ratings.dat."""

    header: bool = True
    """Whether the first line is a header row."""

    columns: Tuple[str, str, str, str] = ('userId', 'movieId', 'rating', 'timestamp')
    """Column names, in file order: user, item, rating, timestamp."""

MOVIELENS_CSV = RatingsFormat()
MOVIELENS_DAT = RatingsFormat(delimiter='::', header=False)
MOVIELENS_100K = RatingsFormat(delimiter='\t', header=False)

RATINGS_FORMATS = {
    'csv': MOVIELENS_CSV,
    'dat': MOVIELENS_DAT,
    'tsv': MOVIELENS_100K,
}

####################
# Model configuration
####################

class SgdConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int = Field(25, ge=1)
    """Number of latent factors."""

    epochs: int = Field(50, ge=1)
    """Full passes over the observed entries."""

    learning_rate: float = Field(0.005, gt=0)
    """SGD step size (eta)."""

    regularization: float = Field(0.0, ge=0)
    """L2 penalty (lambda). 0 reproduces the plain SSE objective."""

    init_scale: float = Field(0.1, gt=0)
    """Factors start uniform in (-init_scale, init_scale]."""

    seed: int = 0
    """Seed for initialisation and per-epoch shuffling."""

class MLPConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_layers: int = Field(4, ge=1)
    """Number of hidden layers; all share `hidden_nodes` units."""

    hidden_nodes: int = Field(12, ge=1)
    """Width of every hidden layer."""

    activation: Activation = Activation.TANH
    """Hidden-layer nonlinearity."""

    learning_rate: float = Field(0.01, gt=0)

    epochs: int = Field(200, ge=1)

    batch_size: int = Field(32, ge=1)

    seed: int = 0

    mode: NetworkMode = NetworkMode.GLOBAL
    """One network for all users, or one network per user."""

####################
# Run configuration
####################

class DataPaths(BaseModel):
    ratings: Optional[str] = None
    """Full ratings file; split on the fly when train/test are not given."""

    train: Optional[str] = None
    """Training ratings file (same format as ratings)."""

    test: Optional[str] = None
    """Test ratings file (same format as ratings)."""

    catalog: Optional[str] = None
    """movieId,title,genres file used for titles and MLP attributes."""

    features: Optional[str] = None
    """Binary item-feature file for the content-based predictor."""

    attributes: Optional[str] = None
    """Optional movieId,imdb_rating,year,genres,country,actor,director file."""

    ratings_format: str = 'csv'
    """Key into RATINGS_FORMATS."""

    @field_validator('ratings_format')
    def validate_ratings_format(cls, value):
        if value not in RATINGS_FORMATS:
            raise ValueError(f"Invalid ratings_format: '{value}'. Must be one of: {list(RATINGS_FORMATS)}")
        return value

    def resolve(self, base_dir: str) -> 'DataPaths':
        """Return a copy with every relative path anchored at base_dir."""
        resolved = {}
        for name, value in self.model_dump().items():
            if name != 'ratings_format' and value and not os.path.isabs(value):
                value = os.path.join(base_dir, value)
            resolved[name] = value
        return DataPaths(**resolved)

class RunConfig(BaseModel):
    subcommand: str

    data: DataPaths = Field(default_factory=DataPaths)

    algo: Optional[Algorithm] = None

    # neighborhood / content
    k_neighbors: int = Field(30, ge=1)
    weighting: Weighting = Weighting.WEIGHTED
    restore_means: bool = False

    # factorization
    k: int = Field(25, ge=1)
    ks: List[int] = Field(default_factory=lambda: list(DEFAULT_KS), min_length=1)
    learning_rate: float = Field(0.005, gt=0)
    epochs: int = Field(50, ge=1)
    regularization: float = Field(0.0, ge=0)
    init_scale: float = Field(0.1, gt=0)
    model_path: Optional[str] = None

    # neural
    hidden_layers: int = Field(4, ge=1)
    hidden_nodes: int = Field(12, ge=1)
    activation: Activation = Activation.TANH
    mlp_learning_rate: float = Field(0.01, gt=0)
    mlp_epochs: int = Field(200, ge=1)
    batch_size: int = Field(32, ge=1)
    network_mode: NetworkMode = NetworkMode.GLOBAL
    grid_mode: GridMode = GridMode.GLOBAL
    activations: List[Activation] = Field(default_factory=lambda: list(DEFAULT_ACTIVATIONS), min_length=1)
    architectures: List[Tuple[int, int]] = Field(default_factory=lambda: list(DEFAULT_ARCHITECTURES), min_length=1)
    max_users: int = Field(9, ge=1)

    # common
    seed: int = 0
    test_fraction: float = Field(0.25, gt=0, lt=1)
    user: Optional[int] = None
    n: int = Field(10, ge=1)
    output: Optional[str] = None
    format: ReportFormat = ReportFormat.TEXT

    @field_validator('ks')
    def validate_ks(cls, value):
        if any(k < 1 for k in value):
            raise ValueError(f"Every k must be >= 1, got {value}")
        return value

    @field_validator('architectures')
    def validate_architectures(cls, value):
        if any(layers < 1 or nodes < 1 for layers, nodes in value):
            raise ValueError(f"Architectures need layers >= 1 and nodes >= 1, got {value}")
        return value

    def sgd_config(self, k: Optional[int] = None) -> SgdConfig:
        return SgdConfig(
            k=k if k is not None else self.k,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            regularization=self.regularization,
            init_scale=self.init_scale,
            seed=self.seed,
        )

    def mlp_config(self) -> MLPConfig:
        return MLPConfig(
            hidden_layers=self.hidden_layers,
            hidden_nodes=self.hidden_nodes,
            activation=self.activation,
            learning_rate=self.mlp_learning_rate,
            epochs=self.mlp_epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            mode=self.network_mode,
        )

    def echo(self) -> List[str]:
        """Effective configuration as 'key: value' lines, stable order."""
        lines = []
        for key, value in self.model_dump(mode='json').items():
            if key == 'data':
                for path_key, path in value.items():
                    if path is not None:
                        lines.append(f"data.{path_key}: {path}")
                continue
            if value is None:
                continue
            lines.append(f"{key}: {value}")
        return lines

####################
# Scenario manifests
####################

class ExperimentManifest(BaseModel):
    kind: str
    """Type of the scenario: 'evaluate', 'recommend', 'sweep_k' or 'nn_grid'."""

    @field_validator('kind')
    def validate_kind(cls, value):
        if value not in kind_options:
            raise ValueError(f"Invalid kind: '{value}'. Must be one of: {kind_options}")
        return value

    description: Optional[str] = None
    """Free text shown in the run log."""

    data: DataPaths
    """Data files, relative to the scenario directory."""

    params: dict[str, Any] = Field(default_factory=dict)
    """Any RunConfig field, e.g. algo, seed, ks, k_neighbors."""

    def to_run_config(self, scenario_path: str) -> RunConfig:
        subcommand = self.kind.replace('_', '-')
        return RunConfig(subcommand=subcommand, data=self.data.resolve(scenario_path), **self.params)

####################
# Main function
####################

def read_experiment_manifest(file) -> ExperimentManifest:
    obj = yaml.safe_load(file)

    if not isinstance(obj, dict) or obj.get('kind') not in kind_options:
        raise ValueError(f"Unknown kind in manifest, must be one of: {kind_options}")
    return ExperimentManifest(**obj)
