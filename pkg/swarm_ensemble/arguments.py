import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from transformers import HfArgumentParser

from .errors import ConfigError, DataError
from .utils import read_json

CLASSIFIER_NAMES = ["knn", "linear_svm", "mlp", "c45", "gaussian_nb"]


@dataclass
class DataArguments:
    dataset_path: Optional[str] = field(
        default=None, metadata={"help": "Path to the region CSV (region_id,label,ch<i>_f<j>...)."}
    )
    schema_path: Optional[str] = field(
        default=None, metadata={"help": "Path to the schema sidecar. Defaults to <dataset>.schema.json."}
    )
    train_fraction: float = field(
        default=0.75, metadata={"help": "Share of every class sent to the training split."}
    )
    folds: int = field(
        default=10, metadata={"help": "K of the stratified K-fold used for hyperparameter tuning."}
    )

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.folds < 2:
            raise ConfigError("K must be ≥ 2")

    def resolved_schema_path(self) -> str:
        if self.schema_path:
            return self.schema_path
        if not self.dataset_path:
            raise ConfigError("no dataset path given, pass --dataset or set dataset_path in the config")
        root, _ = os.path.splitext(self.dataset_path)
        return f"{root}.schema.json"


@dataclass
class LearnerArguments:
    classifiers: List[str] = field(
        default_factory=lambda: list(CLASSIFIER_NAMES),
        metadata={"help": "Classifier families forming the grid columns, in column order."},
    )
    knn_k: int = field(default=5, metadata={"help": "Neighbours consulted by KNN."})
    svm_c: float = field(default=10.0, metadata={"help": "Margin penalty of the one-vs-rest linear SVM."})
    svm_epochs: int = field(default=300, metadata={"help": "Full-batch subgradient epochs of the SVM."})
    svm_learning_rate: float = field(default=0.5, metadata={"help": "Initial SVM step size, decayed as 1/sqrt(t)."})
    mlp_hidden: int = field(default=32, metadata={"help": "Width of the single MLP hidden layer."})
    mlp_learning_rate: float = field(default=0.5, metadata={"help": "MLP gradient descent step size."})
    mlp_epochs: int = field(default=500, metadata={"help": "MLP full-batch epochs."})
    tree_max_depth: int = field(default=10, metadata={"help": "Maximum depth of the gain-ratio tree."})
    tree_min_samples_leaf: int = field(default=1, metadata={"help": "Minimum regions per tree leaf."})
    nb_var_floor: float = field(default=1e-9, metadata={"help": "Lower bound on Gaussian NB variances."})
    retrain_per_fold: bool = field(
        default=False,
        metadata={"help": "Tune on out-of-fold votes from learners retrained on the other K-1 folds."},
    )

    def __post_init__(self):
        unknown = [c for c in self.classifiers if c not in CLASSIFIER_NAMES]
        if unknown or not self.classifiers:
            raise ConfigError(f"classifiers must be drawn from {CLASSIFIER_NAMES}, got {self.classifiers}")
        if self.knn_k < 1:
            raise ConfigError(f"knn_k must be at least 1, got {self.knn_k}")
        positives = {
            "svm_c": self.svm_c, "svm_epochs": self.svm_epochs, "svm_learning_rate": self.svm_learning_rate,
            "mlp_hidden": self.mlp_hidden, "mlp_learning_rate": self.mlp_learning_rate,
            "mlp_epochs": self.mlp_epochs, "tree_max_depth": self.tree_max_depth,
            "tree_min_samples_leaf": self.tree_min_samples_leaf, "nb_var_floor": self.nb_var_floor,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")


@dataclass
class WoaArguments:
    pop_size: int = field(default=50, metadata={"help": "Number of whales."})
    max_iter: int = field(default=500, metadata={"help": "Number of WOA iterations."})
    spiral_b: float = field(default=1.0, metadata={"help": "Logarithmic spiral shape constant b."})

    def __post_init__(self):
        if self.pop_size < 2:
            raise ConfigError(f"pop_size must be at least 2, got {self.pop_size}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.spiral_b <= 0:
            raise ConfigError(f"spiral_b must be positive, got {self.spiral_b}")


@dataclass
class FitnessArguments:
    w_a: float = field(default=0.5, metadata={"help": "Weight of accuracy in the fitness."})
    w_p: float = field(default=0.3, metadata={"help": "Weight of class-weighted precision in the fitness."})
    w_r: float = field(default=0.2, metadata={"help": "Weight of class-weighted recall in the fitness."})
    cv_aggregation: str = field(
        default="mean",
        metadata={"help": "How fold results combine: `mean` of fold fitness or `pooled` confusion matrix."},
    )

    def __post_init__(self):
        if min(self.w_a, self.w_p, self.w_r) < 0 or self.w_a + self.w_p + self.w_r <= 0:
            raise ConfigError(f"fitness weights must be non-negative with a positive sum, got "
                              f"({self.w_a}, {self.w_p}, {self.w_r})")
        if self.cv_aggregation not in ("mean", "pooled"):
            raise ConfigError(f"cv_aggregation must be `mean` or `pooled`, got {self.cv_aggregation!r}")


@dataclass
class RunArguments:
    seed: int = field(default=2023, metadata={"help": "Master seed; every random draw derives from it."})
    threads: int = field(default=1, metadata={"help": "Workers for grid training and WOA evaluation."})
    output_dir: str = field(default="output", metadata={"help": "Directory receiving the run artifacts."})

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")


ARGUMENT_GROUPS = (DataArguments, LearnerArguments, WoaArguments, FitnessArguments, RunArguments)


@dataclass
class RunConfig:
    data: DataArguments
    learners: LearnerArguments
    woa: WoaArguments
    fitness: FitnessArguments
    run: RunArguments

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: asdict(getattr(self, name)) for name in ("data", "learners", "woa", "fitness", "run")}


def load_run_config(config_path: Optional[str] = None, **overrides: Any) -> RunConfig:
    """Builds the argument groups from an optional flat JSON config plus non-None overrides."""
    values: Dict[str, Any] = {}
    if config_path is not None:
        if not os.path.exists(config_path):
            raise DataError(f"config file not found: {config_path}")
        raw = read_json(config_path)
        if not isinstance(raw, dict):
            raise ConfigError(f"{config_path}: config must be a JSON object of flat keys")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})

    parser = HfArgumentParser(ARGUMENT_GROUPS)
    try:
        groups: Tuple = parser.parse_dict(values, allow_extra_keys=False)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    return RunConfig(*groups)
