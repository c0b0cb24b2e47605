import itertools

import numpy as np
import pytest

from swarm_ensemble.dataset import FoldPlan, stratified_kfold_labels
from swarm_ensemble.errors import ConfigError, DataError, NumericError
from swarm_ensemble.learners import PredictionCube
from swarm_ensemble.metrics import FitnessWeights
from swarm_ensemble.utils import substream
from swarm_ensemble.woa import (
    CvObjective,
    Solution,
    WoaParams,
    evaluate_solution_cv,
    init_population,
    move_whale,
    optimize,
    tune_solution,
    woa_step,
)

DEFAULT_WEIGHTS = FitnessWeights()


def _sphere(x):
    return -float(np.sum((x - 0.5) ** 2))


def _fixture_folds(cube):
    return stratified_kfold_labels(cube.region_ids, cube.truth, 2, seed=0)


def _oracle(cube, folds):
    """Exhaustive search over quantized weights and thresholds."""
    levels = [0.0, 1 / 3, 2 / 3, 1.0]
    thresholds = np.round(np.arange(0.05, 1.0, 0.1), 2)
    objective = CvObjective(cube, folds, DEFAULT_WEIGHTS)
    best, best_sol = -np.inf, None
    for w in itertools.product(levels, repeat=4):
        weights = np.array(w).reshape(2, 2)
        for dth in thresholds:
            sol = Solution(weights, float(dth))
            value = objective(sol.to_vector())
            if value > best:
                best, best_sol = value, sol
    return best, best_sol


class TestSchedule:
    def test_a_decreases_from_two_to_zero(self):
        params = WoaParams(pop_size=5, max_iter=11)
        assert params.a_at(0) == 2.0
        assert params.a_at(10) == 0.0
        np.testing.assert_allclose(params.a_at(5), 1.0)
        values = [params.a_at(t) for t in range(11)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_single_iteration(self):
        assert WoaParams(pop_size=5, max_iter=1).a_at(0) == 0.0

    @pytest.mark.parametrize("kwargs", [dict(pop_size=1), dict(max_iter=0), dict(b=0.0)])
    def test_invalid_params(self, kwargs):
        with pytest.raises(ConfigError):
            WoaParams(**kwargs)


class TestMoves:
    def test_encircling(self):
        x, best = np.array([0.2, 0.4]), np.array([0.5, 0.5])
        # a=1, r1=0.75 -> A=0.5; r2=0.5 -> C=1
        moved = move_whale(x, best, x_rand=np.zeros(2), a=1.0, r1=0.75, r2=0.5, p=0.1, l=0.0, b=1.0)
        np.testing.assert_allclose(moved, best - 0.5 * np.abs(best - x))

    def test_exploration_uses_random_whale(self):
        x, best, x_rand = np.array([0.2, 0.4]), np.array([0.5, 0.5]), np.array([0.9, 0.1])
        # a=2, r1=1 -> A=2
        moved = move_whale(x, best, x_rand, a=2.0, r1=1.0, r2=0.5, p=0.1, l=0.0, b=1.0)
        np.testing.assert_allclose(moved, x_rand - 2.0 * np.abs(x_rand - x))

    def test_spiral(self):
        x, best = np.array([0.2, 0.4]), np.array([0.5, 0.5])
        moved = move_whale(x, best, np.zeros(2), a=1.0, r1=0.5, r2=0.5, p=0.9, l=0.5, b=1.0)
        np.testing.assert_allclose(moved, np.abs(best - x) * np.exp(0.5) * np.cos(np.pi) + best)

    def test_zero_a_collapses_onto_best(self):
        x, best = np.array([0.2, 0.4]), np.array([0.5, 0.5])
        moved = move_whale(x, best, np.zeros(2), a=0.0, r1=0.3, r2=0.7, p=0.2, l=0.0, b=1.0)
        np.testing.assert_allclose(moved, best)


class TestStep:
    def test_positions_stay_in_box(self):
        params = WoaParams(pop_size=20, max_iter=10, seed=4)
        pop = init_population(params, 6)
        best = pop[0]
        for t in range(10):
            pop = woa_step(pop, best, t, params)
            assert pop.min() >= 0.0 and pop.max() <= 1.0

    def test_deterministic(self):
        params = WoaParams(pop_size=8, max_iter=3, seed=42)
        pop = init_population(params, 5)
        np.testing.assert_array_equal(woa_step(pop, pop[1], 0, params), woa_step(pop, pop[1], 0, params))

    def test_one_substream_per_iteration(self):
        params = WoaParams(pop_size=6, max_iter=4, seed=9)
        pop = init_population(params, 3)
        best = pop[2]
        rng = substream(params.seed, 2)
        draws = rng.random((6, 4))
        partners = rng.integers(6, size=6)
        a = params.a_at(1)
        expected = [move_whale(pop[w], best, pop[partners[w]], a, r1, r2, p, 2.0 * u - 1.0, params.b)
                    for w, (r1, r2, p, u) in enumerate(draws)]
        np.testing.assert_array_equal(woa_step(pop, best, 1, params), np.clip(expected, 0.0, 1.0))

    def test_empty_population(self):
        with pytest.raises(ConfigError, match="empty population"):
            woa_step(np.zeros((0, 3)), np.zeros(3), 0, WoaParams(pop_size=2, max_iter=2))

    def test_initial_weights_never_all_zero(self):
        pop = init_population(WoaParams(pop_size=30, max_iter=1, seed=1), 5)
        assert np.all(pop[:, :-1].sum(axis=1) > 0)


class TestOptimize:
    def test_trace_is_non_decreasing_and_counts_evaluations(self):
        params = WoaParams(pop_size=12, max_iter=40, seed=3)
        best, trace = optimize(_sphere, params, 4)
        assert len(trace) == 40
        assert trace.evaluations == 12 * 41
        assert all(a <= b for a, b in zip(trace.best_fitness, trace.best_fitness[1:]))
        assert _sphere(best) == trace.final_fitness

    def test_same_seed_same_trace_any_thread_count(self):
        params = WoaParams(pop_size=10, max_iter=25, seed=17)
        best_a, trace_a = optimize(_sphere, params, 6, threads=1)
        best_b, trace_b = optimize(_sphere, params, 6, threads=4)
        np.testing.assert_array_equal(best_a, best_b)
        assert trace_a.best_fitness == trace_b.best_fitness

    def test_non_finite_objective(self):
        with pytest.raises(NumericError, match="solution"):
            optimize(lambda x: float("nan"), WoaParams(pop_size=3, max_iter=2), 3)

    def test_sphere_converges(self):
        failures = 0
        for seed in range(10):
            _, trace = optimize(_sphere, WoaParams(pop_size=50, max_iter=500, b=1.0, seed=seed), 16)
            assert all(a <= b for a, b in zip(trace.best_fitness, trace.best_fitness[1:]))
            failures += -trace.final_fitness > 1e-3
        assert failures <= 1

    @pytest.mark.slow
    def test_sphere_converges_over_100_seeds(self):
        hits = 0
        for seed in range(100):
            _, trace = optimize(_sphere, WoaParams(pop_size=50, max_iter=500, b=1.0, seed=seed), 16)
            assert all(a <= b for a, b in zip(trace.best_fitness, trace.best_fitness[1:]))
            hits += -trace.final_fitness <= 1e-3
        assert hits >= 95


class TestCrossValidatedFitness:
    def test_zero_weights_score_zero(self, cube_12):
        sol = Solution(np.zeros((2, 2)), 0.5)
        assert evaluate_solution_cv(sol, cube_12, _fixture_folds(cube_12), DEFAULT_WEIGHTS) == 0.0

    def test_single_fold_equals_plain_fitness(self, cube_12, solution_12, expected_12):
        folds = FoldPlan(k=1, assignments={rid: 0 for rid in cube_12.region_ids}, seed=0)
        for aggregation in ("mean", "pooled"):
            value = evaluate_solution_cv(solution_12, cube_12, folds, DEFAULT_WEIGHTS, aggregation)
            np.testing.assert_allclose(value, expected_12["fitness"], rtol=0, atol=1e-12)

    def test_all_folds_degenerate(self):
        cube = PredictionCube(("a", "b"), np.zeros((1, 1, 2), dtype=np.int64), np.zeros(2, dtype=np.int64), 1)
        folds = FoldPlan(k=2, assignments={"a": 0, "b": 1}, seed=0)
        with pytest.raises(DataError, match="every fold"):
            CvObjective(cube, folds, DEFAULT_WEIGHTS)

    def test_degenerate_fold_uses_accuracy(self):
        # fold 1 holds background only
        predicted = np.array([[[1, 0, 0, 1]]])
        cube = PredictionCube(("a", "b", "c", "d"), predicted, np.array([1, 1, 0, 0]), 1)
        folds = FoldPlan(k=2, assignments={"a": 0, "b": 0, "c": 1, "d": 1}, seed=0)
        sol = Solution(np.ones((1, 1)), 0.5)
        # fold 0: accuracy 0.5, precision 1, recall 0.5 -> 0.25 + 0.3 + 0.1; fold 1: accuracy 0.5 -> 0.5
        value = evaluate_solution_cv(sol, cube, folds, DEFAULT_WEIGHTS)
        np.testing.assert_allclose(value, (0.65 + 0.5) / 2)

    def test_objective_reads_flat_positions(self, cube_12, solution_12):
        objective = CvObjective(cube_12, _fixture_folds(cube_12), DEFAULT_WEIGHTS)
        assert objective.dims == 5
        assert objective(solution_12.to_vector()) == evaluate_solution_cv(
            solution_12, cube_12, _fixture_folds(cube_12), DEFAULT_WEIGHTS)


    @pytest.mark.parametrize("scale", [0.5, 2.0])
    def test_weight_scale_is_redundant(self, cube_12, scale):
        rng = np.random.default_rng(21)
        folds = _fixture_folds(cube_12)
        for _ in range(200):
            weights = rng.uniform(0.01, 0.5, size=(2, 2))
            dth = float(rng.uniform())
            base = evaluate_solution_cv(Solution(weights, dth), cube_12, folds, DEFAULT_WEIGHTS)
            scaled = evaluate_solution_cv(Solution(weights * scale, dth), cube_12, folds, DEFAULT_WEIGHTS)
            assert scaled == base

    def test_objective_repeats_are_stable(self, cube_12):
        objective = CvObjective(cube_12, _fixture_folds(cube_12), DEFAULT_WEIGHTS, "pooled")
        rng = np.random.default_rng(2)
        positions = rng.uniform(size=(40, 5))
        first = [objective(p) for p in positions]
        assert [objective(p) for p in positions[::-1]] == first[::-1]
        for p, value in zip(positions, first):
            sol = Solution.from_vector(p, (2, 2))
            assert evaluate_solution_cv(sol, cube_12, _fixture_folds(cube_12), DEFAULT_WEIGHTS, "pooled") == value


class TestAgainstOracle:
    def test_oracle_argmax_is_reproduced(self, cube_12):
        folds = _fixture_folds(cube_12)
        best, sol = _oracle(cube_12, folds)
        assert evaluate_solution_cv(sol, cube_12, folds, DEFAULT_WEIGHTS) == best

    def test_woa_reaches_oracle(self, cube_12):
        folds = _fixture_folds(cube_12)
        oracle, _ = _oracle(cube_12, folds)
        for seed in range(3):
            params = WoaParams(pop_size=50, max_iter=200, seed=seed)
            _, value, trace = tune_solution(cube_12, folds, DEFAULT_WEIGHTS, params)
            assert value >= oracle - 0.01
            assert trace.evaluations == 50 * 201

    @pytest.mark.slow
    def test_woa_reaches_oracle_over_100_seeds(self, cube_12):
        folds = _fixture_folds(cube_12)
        oracle, _ = _oracle(cube_12, folds)
        hits = 0
        for seed in range(100):
            _, value, _ = tune_solution(cube_12, folds, DEFAULT_WEIGHTS, WoaParams(pop_size=50, max_iter=200, seed=seed))
            hits += value >= oracle - 0.01
        assert hits >= 95


class TestSolutionFile:
    def test_save_and_load(self, solution_12, tmp_path):
        path = str(tmp_path / "solution.json")
        solution_12.save(path, cv_fitness=0.5)
        loaded = Solution.load(path)
        np.testing.assert_array_equal(loaded.weights, solution_12.weights)
        assert loaded.dth == solution_12.dth

    def test_malformed(self, tmp_path):
        path = tmp_path / "solution.json"
        path.write_text('{"weights": [[0.5]]}', encoding="utf-8")
        with pytest.raises(DataError, match="dth"):
            Solution.load(str(path))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "solution.json"
        path.write_text('{"weights": [[0.5]], "dth":', encoding="utf-8")
        with pytest.raises(DataError, match="invalid JSON"):
            Solution.load(str(path))

    def test_out_of_range(self):
        with pytest.raises(DataError):
            Solution(np.array([[1.2]]), 0.5)

    def test_trace_frame(self):
        params = WoaParams(pop_size=4, max_iter=3, seed=0)
        _, trace = optimize(_sphere, params, 5)
        frame = trace.to_frame((2, 2))
        assert list(frame.columns) == ["iteration", "best_fitness", "dth", "w_0_0", "w_0_1", "w_1_0", "w_1_1"]
        assert frame["iteration"].tolist() == [1, 2, 3]


class TestBookkeeping:
    def test_constant_objective(self):
        _, trace = optimize(lambda x: 0.25, WoaParams(pop_size=5, max_iter=7, seed=2), 3)
        assert trace.best_fitness == [0.25] * 7

    def test_single_iteration_counts(self):
        _, trace = optimize(_sphere, WoaParams(pop_size=6, max_iter=1, seed=2), 3)
        assert len(trace) == 1
        assert trace.evaluations == 12

    def test_out_of_box_moves_are_clamped(self):
        params = WoaParams(pop_size=2, max_iter=2, seed=0)
        # with best at a corner, spiral and exploration moves overshoot the box
        pop = np.array([[0.0, 0.0], [1.0, 1.0]])
        for t in range(2):
            moved = woa_step(pop, np.array([1.0, 1.0]), t, params)
            assert moved.min() >= 0.0 and moved.max() <= 1.0

    def test_perfect_learners_score_one(self):
        truth = np.array([0, 1, 2, 1, 2, 0, 1, 2])
        cube = PredictionCube(tuple(f"r{k}" for k in range(8)), np.tile(truth, (2, 3, 1)), truth, 2)
        folds = stratified_kfold_labels(cube.region_ids, cube.truth, 2, seed=1)
        sol = Solution(np.full((2, 3), 0.3), 0.9)
        assert evaluate_solution_cv(sol, cube, folds, DEFAULT_WEIGHTS) == pytest.approx(1.0)
