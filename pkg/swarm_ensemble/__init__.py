from .dataset import Dataset, FoldPlan, LabeledRegion, load_dataset, split_holdout, stratified_kfold
from .ensemble import aggregate_scores, classify_all, decide_label
from .learners import LearnerKind, PredictionCube, TrainedLearner, build_prediction_cube, ingest_prediction_cube
from .metrics import ConfusionMatrix, FitnessWeights, accuracy, confusion_matrix, fitness, precision_avg, recall_avg
from .woa import Solution, WoaParams, WoaTrace, evaluate_solution_cv, init_population, optimize, woa_step

__version__ = "0.1.0"
