import logging
import os
import time
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .arguments import LearnerArguments, RunConfig
from .dataset import Dataset, DatasetSchema, FoldPlan, load_dataset, split_holdout, stratified_kfold, \
    stratified_kfold_labels
from .ensemble import classify_all
from .errors import DataError
from .learners import PredictionCube, build_prediction_cube, ingest_prediction_cube, train_learner_grid, \
    write_prediction_cube
from .metrics import FitnessWeights, confusion_matrix, metrics_report
from .utils import derive_seed, write_json
from .woa import Solution, WoaParams, evaluate_solution_cv, tune_solution

logger = logging.getLogger(__name__)

# child-seed keys under the master seed
SPLIT_KEY, LEARNER_KEY, FOLD_KEY, WOA_KEY = 1, 2, 3, 4

UNIFORM_DTH_GRID = np.round(np.arange(0.0, 1.0, 0.05), 2)


def fitness_weights(config: RunConfig) -> FitnessWeights:
    return FitnessWeights(config.fitness.w_a, config.fitness.w_p, config.fitness.w_r)


def woa_params(config: RunConfig) -> WoaParams:
    return WoaParams(pop_size=config.woa.pop_size, max_iter=config.woa.max_iter, b=config.woa.spiral_b,
                     seed=derive_seed(config.run.seed, WOA_KEY))


def out_of_fold_cube(train: Dataset, folds: FoldPlan, args: LearnerArguments, seed: int,
                     threads: int = 1) -> PredictionCube:
    """Votes for every training region from learners that were trained without its fold."""
    fold_of = folds.folds_for(train.region_ids)
    predicted = np.zeros((train.n_channels, len(args.classifiers), len(train)), dtype=np.int64)
    for f in range(folds.k):
        held_out = np.flatnonzero(fold_of == f)
        if len(held_out) == 0:
            continue
        grid = train_learner_grid(train.take(np.flatnonzero(fold_of != f)), args, derive_seed(seed, f), threads)
        cube = build_prediction_cube(grid, train.take(held_out), (train.n_channels, len(args.classifiers)), threads)
        predicted[:, :, held_out] = cube.predicted
    return PredictionCube(train.region_ids, predicted, train.labels.copy(), train.class_count)


def uniform_baseline(train_cube: PredictionCube, folds: FoldPlan, fw: FitnessWeights,
                     aggregation: str) -> Solution:
    """Uniform weights with the decision threshold picked on the training folds."""
    weights = np.ones(train_cube.grid_shape)
    scores = [evaluate_solution_cv(Solution(weights, dth), train_cube, folds, fw, aggregation)
              for dth in UNIFORM_DTH_GRID]
    return Solution(weights, float(UNIFORM_DTH_GRID[int(np.argmax(scores))]))


def evaluate_cube(cube: PredictionCube, solution: Solution, fw: FitnessWeights) -> Dict[str, Any]:
    labels = classify_all(cube, solution.weights, solution.dth)
    return metrics_report(confusion_matrix(labels, cube.truth, cube.class_count), fw)


def baseline_reports(test_cube: PredictionCube, uniform: Solution, classifiers: List[str],
                     fw: FitnessWeights) -> Dict[str, Any]:
    learners = []
    n_fe, n_cl = test_cube.grid_shape
    for i in range(n_fe):
        for j in range(n_cl):
            cm = confusion_matrix(test_cube.predicted[i, j], test_cube.truth, test_cube.class_count)
            report = metrics_report(cm, fw)
            learners.append({"extractor": i, "classifier": classifiers[j],
                             **{k: report[k] for k in ("accuracy", "precision_avg", "recall_avg", "fitness")}})
    return {
        "learners": learners,
        "uniform": {"dth": uniform.dth, **evaluate_cube(test_cube, uniform, fw)},
    }


def _provenance(config: RunConfig) -> Dict[str, Any]:
    echo = config.to_dict()
    # worker count and output location never change results
    echo["run"] = {k: v for k, v in echo["run"].items() if k not in ("threads", "output_dir")}
    return echo


def run_pipeline(config: RunConfig) -> Dict[str, Any]:
    """Split, train the grid, tune weights and threshold by cross-validated WOA, then test once."""
    data, run = config.data, config.run
    if not data.dataset_path:
        raise DataError("no dataset path given, pass --dataset or set dataset_path in the config")
    schema = DatasetSchema.from_file(data.resolved_schema_path())
    dataset = load_dataset(data.dataset_path, schema)
    fw = fitness_weights(config)

    train, test = split_holdout(dataset, data.train_fraction, derive_seed(run.seed, SPLIT_KEY))
    folds = stratified_kfold(train, data.folds, derive_seed(run.seed, FOLD_KEY))
    grid_shape = (dataset.n_channels, len(config.learners.classifiers))

    start = time.time()
    grid = train_learner_grid(train, config.learners, derive_seed(run.seed, LEARNER_KEY), run.threads)
    if config.learners.retrain_per_fold:
        train_cube = out_of_fold_cube(train, folds, config.learners, derive_seed(run.seed, LEARNER_KEY),
                                      run.threads)
    else:
        train_cube = build_prediction_cube(grid, train, grid_shape, run.threads)
    logger.info(f"base learners ready in {time.time() - start:.1f}s")

    start = time.time()
    solution, cv_fitness, trace = tune_solution(train_cube, folds, fw, woa_params(config),
                                                config.fitness.cv_aggregation, run.threads)
    logger.info(f"WOA finished in {(time.time() - start) / 60:.2f} min")

    # test votes come from the frozen learners only after tuning is over
    test_cube = build_prediction_cube(grid, test, grid_shape, run.threads)
    uniform = uniform_baseline(train_cube, folds, fw, config.fitness.cv_aggregation)

    report = {
        "config": _provenance(config),
        "split": {
            "train": {str(k): v for k, v in train.class_counts.items()},
            "test": {str(k): v for k, v in test.class_counts.items()},
        },
        "folds": {"k": folds.k, "sizes": folds.fold_sizes()},
        "grid": {"extractors": grid_shape[0], "classifiers": list(config.learners.classifiers)},
        "woa": {"evaluations": trace.evaluations, "cv_fitness": cv_fitness},
        "solution": solution.to_dict(),
        "test": evaluate_cube(test_cube, solution, fw),
        "baselines": baseline_reports(test_cube, uniform, config.learners.classifiers, fw),
    }

    out = run.output_dir
    os.makedirs(out, exist_ok=True)
    write_json(report, os.path.join(out, "report.json"))
    trace.write_csv(os.path.join(out, "trace.csv"), grid_shape)
    solution.save(os.path.join(out, "solution.json"))
    write_prediction_cube(train_cube, os.path.join(out, "cube.csv"))
    write_prediction_cube(test_cube, os.path.join(out, "test_cube.csv"))
    logger.info(f"test fitness {report['test']['fitness']:.4f}, artifacts written to {out}")
    return report


def cube_folds(cube: PredictionCube, k: int, seed: int) -> FoldPlan:
    """Stratified folds over a cube's regions; K shrinks to the region count, a single region is one fold."""
    n = len(cube)
    if n < k:
        logger.warning(f"cube holds {n} regions, using {max(n, 1)} folds instead of {k}")
        k = n
    if k < 2:
        return FoldPlan(k=1, assignments={rid: 0 for rid in cube.region_ids}, seed=seed)
    return stratified_kfold_labels(cube.region_ids, cube.truth, k, seed)


def optimize_cube(cube_path: str, config: RunConfig, class_count: Optional[int] = None) -> Tuple[Solution, float]:
    cube = ingest_prediction_cube(cube_path, class_count)
    fw = fitness_weights(config)
    folds = cube_folds(cube, config.data.folds, derive_seed(config.run.seed, FOLD_KEY))
    solution, cv_fitness, trace = tune_solution(cube, folds, fw, woa_params(config),
                                                config.fitness.cv_aggregation, config.run.threads)
    out = config.run.output_dir
    solution.save(os.path.join(out, "solution.json"), cv_fitness=cv_fitness)
    trace.write_csv(os.path.join(out, "trace.csv"), cube.grid_shape)
    logger.info(f"solution and trace written to {out}")
    return solution, cv_fitness


def evaluate_solution_file(cube_path: str, solution_path: str, fw: FitnessWeights, output_dir: str,
                           class_count: Optional[int] = None) -> Dict[str, Any]:
    cube = ingest_prediction_cube(cube_path, class_count)
    solution = Solution.load(solution_path)
    report = evaluate_cube(cube, solution, fw)
    write_json(report, os.path.join(output_dir, "report.json"))
    logger.info(f"accuracy {report['accuracy']:.4f}, fitness {report['fitness']:.4f}")
    return report
