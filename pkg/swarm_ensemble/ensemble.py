"""Weighted averaging of base-learner votes and the thresholded decision rule.

A region's class score is the weight share of the learners voting for that class,

    score[c] = sum_ij w_ij * vote[i, j, c] / sum_ij w_ij

and the region is labeled with the strongest object class when that score exceeds the
decision threshold, otherwise with background (label 0).
"""
import numpy as np

from .errors import ConfigError, DataError, DegenerateWeightsError
from .learners import PredictionCube


def check_weights(weights: np.ndarray, grid_shape=None) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise DataError(f"weight matrix must be 2-dimensional, got shape {w.shape}")
    if grid_shape is not None and w.shape != tuple(grid_shape):
        raise DataError(f"weight matrix shape {w.shape} does not match the learner grid {tuple(grid_shape)}")
    if not np.all(np.isfinite(w)) or w.min() < 0.0 or w.max() > 1.0:
        raise DataError("weights must lie in [0, 1]")
    if w.sum() <= 0.0:
        raise DegenerateWeightsError()
    return w


def check_threshold(dth: float) -> float:
    if not 0.0 <= dth <= 1.0:
        raise ConfigError(f"decision threshold must lie in [0, 1], got {dth}")
    return float(dth)


def aggregate_scores(votes_for_region: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Class scores of one region from its (i, j, c) one-hot vote slice."""
    w = check_weights(weights, np.shape(votes_for_region)[:2])
    return np.einsum("ij,ijc->c", w, votes_for_region) / w.sum()


def _cube_scores(cube: PredictionCube, w: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ijkc->kc", w, cube.votes) / w.sum()


def aggregate_cube(cube: PredictionCube, weights: np.ndarray) -> np.ndarray:
    """Scores of every region, shape (n_regions, C + 1)."""
    return _cube_scores(cube, check_weights(weights, cube.grid_shape))


def decide_labels(scores: np.ndarray, dth: float) -> np.ndarray:
    object_scores = scores[:, 1:]
    # argmax over object classes only; first maximum wins ties
    best = np.argmax(object_scores, axis=1)
    top = object_scores[np.arange(len(scores)), best]
    return np.where(top > dth, best + 1, 0)


def decide_label(scores: np.ndarray, dth: float) -> int:
    dth = check_threshold(dth)
    return int(decide_labels(np.asarray(scores, dtype=np.float64)[None, :], dth)[0])


def classify_all(cube: PredictionCube, weights: np.ndarray, dth: float) -> np.ndarray:
    dth = check_threshold(dth)
    w = check_weights(weights, cube.grid_shape)
    if len(cube) == 0:
        return np.zeros(0, dtype=np.int64)
    return decide_labels(_cube_scores(cube, w), dth)
