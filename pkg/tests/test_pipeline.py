import os

import numpy as np
import pytest

from swarm_ensemble.arguments import load_run_config
from swarm_ensemble.dataset import DatasetSchema, load_dataset, split_holdout, write_dataset
from swarm_ensemble.learners import ingest_prediction_cube
from swarm_ensemble.pipeline import SPLIT_KEY, cube_folds, optimize_cube, run_pipeline
from swarm_ensemble.synthetic import class_sizes, generate_synthetic
from swarm_ensemble.utils import derive_seed, read_json

from .conftest import fixture_path

FAST = dict(folds=3, svm_epochs=100, mlp_epochs=300, mlp_hidden=16, tree_max_depth=6, pop_size=8, max_iter=6)


def _write_synthetic(root, **kwargs):
    dataset = generate_synthetic(**kwargs)
    path = os.path.join(root, "regions.csv")
    write_dataset(dataset, path, os.path.join(root, "regions.schema.json"))
    return path


def _read(path):
    with open(path, "rb") as f:
        return f.read()


class TestSynthetic:
    def test_benchmark_proportions_with_floor(self):
        sizes = class_sizes(500, 4)
        assert sizes.sum() == 500
        assert sizes[4] == 10
        assert sizes[1] > sizes[3] > sizes[2]

    def test_deterministic(self):
        a = generate_synthetic(n_regions=60, channel_dims=(2,), class_count=2, seed=5)
        b = generate_synthetic(n_regions=60, channel_dims=(2,), class_count=2, seed=5)
        np.testing.assert_array_equal(a.channels[0], b.channels[0])
        np.testing.assert_array_equal(a.labels, b.labels)


class TestRunPipeline:
    def test_artifacts_and_report(self, tmp_path):
        path = _write_synthetic(str(tmp_path), n_regions=120, channel_dims=(3, 4), class_count=2, seed=4,
                                separation=2.5)
        out = str(tmp_path / "out")
        report = run_pipeline(load_run_config(dataset_path=path, output_dir=out, seed=9, **FAST))
        for name in ("report.json", "trace.csv", "solution.json", "cube.csv", "test_cube.csv"):
            assert os.path.exists(os.path.join(out, name))
        assert read_json(os.path.join(out, "report.json")) == report
        assert report["woa"]["evaluations"] == 8 * 7
        assert len(report["baselines"]["learners"]) == 2 * 5
        assert "threads" not in report["config"]["run"]
        assert report["config"]["woa"] == {"pop_size": 8, "max_iter": 6, "spiral_b": 1.0}

        # the test cube holds exactly the held-out regions
        dataset = load_dataset(path, DatasetSchema.from_file(os.path.join(str(tmp_path), "regions.schema.json")))
        _, test = split_holdout(dataset, 0.75, derive_seed(9, SPLIT_KEY))
        test_cube = ingest_prediction_cube(os.path.join(out, "test_cube.csv"), class_count=2)
        assert len(test_cube) == len(test)
        assert report["split"]["test"] == {str(k): v for k, v in test.class_counts.items()}

    def test_byte_identical_across_thread_counts(self, tmp_path):
        path = _write_synthetic(str(tmp_path), n_regions=100, channel_dims=(2, 3), class_count=2, seed=8,
                                separation=2.0)
        outs = []
        for threads in (1, 1, 3):
            out = str(tmp_path / f"out{len(outs)}")
            run_pipeline(load_run_config(dataset_path=path, output_dir=out, seed=13, threads=threads, **FAST))
            outs.append(out)
        for name in ("report.json", "trace.csv", "solution.json"):
            assert _read(os.path.join(outs[0], name)) == _read(os.path.join(outs[1], name))
            assert _read(os.path.join(outs[0], name)) == _read(os.path.join(outs[2], name))

    def test_retrain_per_fold(self, tmp_path):
        path = _write_synthetic(str(tmp_path), n_regions=90, channel_dims=(2,), class_count=2, seed=2,
                                separation=3.0)
        out = str(tmp_path / "out")
        report = run_pipeline(load_run_config(dataset_path=path, output_dir=out, retrain_per_fold=True,
                                              classifiers=["knn", "gaussian_nb"], **FAST))
        cube = ingest_prediction_cube(os.path.join(out, "cube.csv"), class_count=2)
        assert cube.grid_shape == (1, 2)
        assert 0.0 <= report["test"]["fitness"] <= 1.0

    @pytest.mark.slow
    def test_tuned_ensemble_matches_baselines(self, tmp_path):
        path = _write_synthetic(str(tmp_path), n_regions=500, channel_dims=(8, 8, 8), class_count=4, seed=2023)
        for seed in range(10):
            out = str(tmp_path / f"out{seed}")
            report = run_pipeline(load_run_config(dataset_path=path, output_dir=out, seed=seed, threads=4))
            tuned = report["test"]["fitness"]
            best_single = max(entry["fitness"] for entry in report["baselines"]["learners"])
            assert tuned >= best_single - 0.01
            assert tuned >= report["baselines"]["uniform"]["fitness"] - 0.01


class TestOptimizeCube:
    def test_writes_solution_and_trace(self, tmp_path):
        cfg = load_run_config(folds=2, pop_size=10, max_iter=20, output_dir=str(tmp_path))
        solution, cv_fitness = optimize_cube(fixture_path("cube_12.csv"), cfg, class_count=2)
        assert solution.grid_shape == (2, 2)
        stored = read_json(str(tmp_path / "solution.json"))
        assert stored["cv_fitness"] == cv_fitness
        assert stored["dth"] == solution.dth

    def test_folds_shrink_to_region_count(self, cube_12):
        assert cube_folds(cube_12, 20, seed=0).k == 12
        single = cube_12.take([0])
        plan = cube_folds(single, 10, seed=0)
        assert plan.k == 1
        assert plan.folds_for(single.region_ids).tolist() == [0]
