import os

import numpy as np
import pytest

from swarm_ensemble.arguments import LearnerArguments
from swarm_ensemble.learners import ingest_prediction_cube
from swarm_ensemble.synthetic import generate_synthetic
from swarm_ensemble.utils import read_json
from swarm_ensemble.woa import Solution

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


@pytest.fixture
def cube_12():
    """2x2 grid, two object classes, twelve regions with hand-evaluated votes."""
    return ingest_prediction_cube(fixture_path("cube_12.csv"), class_count=2)


@pytest.fixture
def solution_12():
    return Solution.load(fixture_path("solution_12.json"))


@pytest.fixture
def expected_12():
    return read_json(fixture_path("metrics_12.json"))


@pytest.fixture
def fast_learners():
    return LearnerArguments(svm_epochs=100, mlp_epochs=300, mlp_hidden=16, tree_max_depth=6)


@pytest.fixture
def small_dataset():
    return generate_synthetic(n_regions=120, channel_dims=(3, 4), class_count=2, seed=11, separation=2.5)


def random_cube_votes(rng: np.random.Generator, n_fe: int, n_cl: int, n: int, class_count: int) -> np.ndarray:
    return rng.integers(0, class_count + 1, size=(n_fe, n_cl, n))
