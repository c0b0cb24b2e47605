"""Whale Optimization Algorithm over ensemble weights and the decision threshold.

A whale is a point of [0, 1]^D with D = N_FE * N_CL + 1: the row-major weight matrix followed
by the decision threshold. Every iteration moves each whale by one of three mechanisms
(shrinking encircling of the best whale, exploration toward a random whale, or the
logarithmic bubble-net spiral around the best whale), clamps it back into the box and
re-evaluates the whole population. The best-ever whale is kept.
"""
import logging
import math
import operator
import os
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from .dataset import FoldPlan
from .ensemble import classify_all
from .errors import ConfigError, DataError, NumericError
from .learners import PredictionCube
from .metrics import FitnessWeights, confusion_matrix, tolerant_fitness
from .utils import parallel_map, read_json, substream, write_json

logger = logging.getLogger(__name__)

_INIT_STREAM = 0


@dataclass(frozen=True, eq=False)
class Solution:
    weights: np.ndarray
    dth: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise DataError(f"weight matrix must be 2-dimensional, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or w.min() < 0.0 or w.max() > 1.0:
            raise DataError("solution weights must lie in [0, 1]")
        if not 0.0 <= self.dth <= 1.0:
            raise DataError(f"solution dth must lie in [0, 1], got {self.dth}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dth", float(self.dth))

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.weights.shape

    def to_vector(self) -> np.ndarray:
        return np.append(self.weights.ravel(), self.dth)

    @classmethod
    def from_vector(cls, vector: np.ndarray, grid_shape: Tuple[int, int]) -> "Solution":
        n_fe, n_cl = grid_shape
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (n_fe * n_cl + 1,):
            raise DataError(f"expected a {n_fe * n_cl + 1}-dimensional solution vector, got {vector.shape}")
        return cls(vector[:-1].reshape(n_fe, n_cl), float(vector[-1]))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "dth": self.dth}

    def save(self, path: str, **extra) -> None:
        write_json({**self.to_dict(), **extra}, path)

    @classmethod
    def load(cls, path: str) -> "Solution":
        if not os.path.exists(path):
            raise DataError(f"solution file not found: {path}")
        raw = read_json(path)
        try:
            weights, dth = np.asarray(raw["weights"], dtype=np.float64), float(raw["dth"])
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}: solution must hold a `weights` matrix and a `dth` value ({e})") from e
        return cls(weights, dth)


@dataclass(frozen=True)
class WoaParams:
    pop_size: int = 50
    max_iter: int = 500
    b: float = 1.0
    seed: int = 0
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.pop_size < 2:
            raise ConfigError(f"pop_size must be at least 2, got {self.pop_size}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.b <= 0:
            raise ConfigError(f"b must be positive, got {self.b}")
        if not self.lower < self.upper:
            raise ConfigError(f"empty box [{self.lower}, {self.upper}]")

    def a_at(self, iteration: int) -> float:
        """Linear schedule from 2 at the first iteration to 0 at the last."""
        if self.max_iter == 1:
            return 0.0
        return 2.0 * (self.max_iter - 1 - iteration) / (self.max_iter - 1)


@dataclass
class WoaTrace:
    best_fitness: List[float] = field(default_factory=list)
    best_positions: List[np.ndarray] = field(default_factory=list)
    evaluations: int = 0

    def record(self, fitness: float, position: np.ndarray) -> None:
        self.best_fitness.append(float(fitness))
        self.best_positions.append(position.copy())

    def __len__(self) -> int:
        return len(self.best_fitness)

    @property
    def final_fitness(self) -> float:
        return self.best_fitness[-1]

    def to_frame(self, grid_shape: Tuple[int, int]) -> pd.DataFrame:
        n_fe, n_cl = grid_shape
        positions = np.array(self.best_positions).reshape(len(self), n_fe * n_cl + 1)
        frame = pd.DataFrame(positions[:, :-1], columns=[f"w_{i}_{j}" for i in range(n_fe) for j in range(n_cl)])
        frame.insert(0, "dth", positions[:, -1])
        frame.insert(0, "best_fitness", self.best_fitness)
        frame.insert(0, "iteration", np.arange(1, len(self) + 1))
        return frame

    def write_csv(self, path: str, grid_shape: Tuple[int, int]) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.to_frame(grid_shape).to_csv(path, index=False)


def init_population(params: WoaParams, dims: int) -> np.ndarray:
    """Uniform draws in the box; rows whose weight part is all zero are drawn again."""
    rng = substream(params.seed, _INIT_STREAM)
    population = rng.uniform(params.lower, params.upper, size=(params.pop_size, dims))
    for w in range(params.pop_size):
        while dims > 1 and not np.any(population[w, :-1]):
            population[w] = rng.uniform(params.lower, params.upper, size=dims)
    return population


def move_whale(x: np.ndarray, best: np.ndarray, x_rand: np.ndarray, a: float, r1: float, r2: float,
               p: float, l: float, b: float) -> np.ndarray:
    A = 2.0 * a * r1 - a
    C = 2.0 * r2
    if p < 0.5:
        if abs(A) < 1.0:
            # shrinking encircling
            return best - A * np.abs(C * best - x)
        # search for prey
        return x_rand - A * np.abs(C * x_rand - x)
    # bubble-net spiral
    return np.abs(best - x) * math.exp(b * l) * math.cos(2.0 * math.pi * l) + best


def woa_step(population: np.ndarray, best: np.ndarray, iteration: int, params: WoaParams) -> np.ndarray:
    """Moves every whale once.

    The (seed, iteration) substream yields one row of draws per whale, taken in whale order, so the
    move of whale w depends only on the seed, the iteration and w.
    """
    pop = len(population)
    if pop == 0:
        raise ConfigError("empty population")
    if not 0 <= iteration < params.max_iter:
        raise ConfigError(f"iteration {iteration} outside 0..{params.max_iter - 1}")
    a = params.a_at(iteration)
    rng = substream(params.seed, iteration + 1)
    draws = rng.random((pop, 4))
    partners = rng.integers(pop, size=pop)
    moved = np.empty_like(population)
    for w, (r1, r2, p, u) in enumerate(draws):
        moved[w] = move_whale(population[w], best, population[partners[w]], a, r1, r2, p, 2.0 * u - 1.0, params.b)
    return np.clip(moved, params.lower, params.upper)


def _evaluate(objective: Callable[[np.ndarray], float], population: np.ndarray, threads: int) -> np.ndarray:
    fits = np.array(parallel_map(objective, list(population), threads), dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(fits))
    if len(bad):
        w = int(bad[0])
        raise NumericError(f"objective returned {fits[w]} for solution {population[w].tolist()}")
    return fits


def optimize(objective: Callable[[np.ndarray], float], params: WoaParams, dims: int,
             threads: int = 1) -> Tuple[np.ndarray, WoaTrace]:
    """Maximizes `objective` over [lower, upper]^dims; returns the best-ever position and the trace."""
    trace = WoaTrace()
    population = init_population(params, dims)
    fits = _evaluate(objective, population, threads)
    trace.evaluations += len(population)
    top = int(np.argmax(fits))
    best, best_fit = population[top].copy(), float(fits[top])

    for iteration in range(params.max_iter):
        population = woa_step(population, best, iteration, params)
        fits = _evaluate(objective, population, threads)
        trace.evaluations += len(population)
        top = int(np.argmax(fits))
        if fits[top] > best_fit:
            best, best_fit = population[top].copy(), float(fits[top])
        trace.record(best_fit, best)
        if (iteration + 1) % 50 == 0:
            logger.debug(f"iteration {iteration + 1}/{params.max_iter}: best fitness {best_fit:.6f}")
    return best, trace


def _fold_masks(cube: PredictionCube, folds: FoldPlan) -> List[np.ndarray]:
    fold_of = folds.folds_for(cube.region_ids)
    return [fold_of == f for f in range(folds.k) if np.any(fold_of == f)]


def _labels_fitness(labels: np.ndarray, cube: PredictionCube, masks: List[np.ndarray], fw: FitnessWeights,
                    aggregation: str) -> float:
    cms = [confusion_matrix(labels[m], cube.truth[m], cube.class_count) for m in masks]
    if all(cm.n_total == 0 for cm in cms):
        raise DataError("every fold lacks object-class regions")
    if aggregation == "pooled":
        return tolerant_fitness(reduce(operator.add, cms), fw)
    return float(np.mean([tolerant_fitness(cm, fw) for cm in cms]))


def evaluate_solution_cv(sol: Solution, cube: PredictionCube, folds: FoldPlan, fw: FitnessWeights,
                         aggregation: str = "mean") -> float:
    """Cross-validated fitness of a solution: per-fold fitness averaged, or one pooled confusion matrix."""
    if not np.any(sol.weights):
        return 0.0
    labels = classify_all(cube, sol.weights, sol.dth)
    return _labels_fitness(labels, cube, _fold_masks(cube, folds), fw, aggregation)


class CvObjective:
    """Maps a flat whale position to its cross-validated fitness on a frozen cube and fold plan."""

    def __init__(self, cube: PredictionCube, folds: FoldPlan, fw: FitnessWeights, aggregation: str = "mean"):
        self.cube = cube
        self.folds = folds
        self.fw = fw
        self.aggregation = aggregation
        self.grid_shape = cube.grid_shape
        fold_of = folds.folds_for(cube.region_ids)
        degenerate = [f for f in range(folds.k) if not np.any(cube.truth[fold_of == f] > 0)]
        if len(degenerate) == folds.k:
            raise DataError("every fold lacks object-class regions")
        if degenerate:
            logger.warning(f"folds {degenerate} hold no object-class regions, their fitness uses accuracy only")
        self._masks = _fold_masks(cube, folds)
        self._cache: Dict[bytes, float] = {}

    @property
    def dims(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1] + 1

    def __call__(self, position: np.ndarray) -> float:
        position = np.asarray(position, dtype=np.float64)
        if position.shape != (self.dims,):
            raise DataError(f"expected a {self.dims}-dimensional solution vector, got {position.shape}")
        weights = position[:-1].reshape(self.grid_shape)
        if not np.any(weights):
            return 0.0
        labels = classify_all(self.cube, weights, float(position[-1]))
        # fitness depends on the cube only through the label vector
        key = labels.tobytes()
        value = self._cache.get(key)
        if value is None:
            value = _labels_fitness(labels, self.cube, self._masks, self.fw, self.aggregation)
            self._cache[key] = value
        return value


def tune_solution(cube: PredictionCube, folds: FoldPlan, fw: FitnessWeights, params: WoaParams,
                  aggregation: str = "mean", threads: int = 1) -> Tuple[Solution, float, WoaTrace]:
    objective = CvObjective(cube, folds, fw, aggregation)
    logger.info(f"optimizing {objective.dims} coordinates with {params.pop_size} whales "
                f"for {params.max_iter} iterations")
    best, trace = optimize(objective, params, objective.dims, threads)
    logger.info(f"best cross-validated fitness {trace.final_fitness:.6f} after {trace.evaluations} evaluations")
    return Solution.from_vector(best, cube.grid_shape), trace.final_fitness, trace
