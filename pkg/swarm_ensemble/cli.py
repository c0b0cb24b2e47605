"""Command-line entry point.

Run:
    python -m swarm_ensemble gen_synthetic --out data/synthetic --n_regions 500
    python -m swarm_ensemble run --config configs/run.json --dataset data/synthetic/regions.csv --out output/run
    python -m swarm_ensemble optimize --cube output/run/cube.csv --out output/tuned --seed 7
    python -m swarm_ensemble evaluate --cube output/run/test_cube.csv --solution output/tuned/solution.json
"""
import logging
import os
import sys
from typing import Optional, Sequence

import fire

from .arguments import load_run_config
from .dataset import write_dataset
from .errors import SwarmEnsembleError
from .metrics import FitnessWeights
from .pipeline import evaluate_solution_file, optimize_cube, run_pipeline
from .synthetic import generate_synthetic
from .utils import format_params, init_logger

logger = logging.getLogger("swarm_ensemble.cli")


class SwarmEnsembleCLI:
    """Two-stage weighted ensemble with whale-optimized weights and decision threshold."""

    def __init__(self, verbose: bool = False):
        init_logger(verbose)

    def run(self, config: Optional[str] = None, dataset: Optional[str] = None, schema: Optional[str] = None,
            seed: Optional[int] = None, threads: Optional[int] = None, out: Optional[str] = None):
        """Split, train the base-learner grid, tune by WOA and report held-out metrics."""
        cfg = load_run_config(config, dataset_path=dataset, schema_path=schema, seed=seed, threads=threads,
                              output_dir=out)
        logger.info("running with params:\n" + format_params(
            (k, v) for group in cfg.to_dict().values() for k, v in group.items()))
        run_pipeline(cfg)

    def optimize(self, cube: str, config: Optional[str] = None, class_count: Optional[int] = None,
                 seed: Optional[int] = None, threads: Optional[int] = None, out: Optional[str] = None,
                 folds: Optional[int] = None, pop_size: Optional[int] = None, max_iter: Optional[int] = None):
        """Tune weights and threshold on an existing prediction cube."""
        cfg = load_run_config(config, seed=seed, threads=threads, output_dir=out, folds=folds,
                              pop_size=pop_size, max_iter=max_iter)
        solution, cv_fitness = optimize_cube(cube, cfg, class_count)
        logger.info(f"dth {solution.dth:.4f}, cross-validated fitness {cv_fitness:.6f}")

    def evaluate(self, cube: str, solution: str, out: str = "output", class_count: Optional[int] = None,
                 w_a: float = 0.5, w_p: float = 0.3, w_r: float = 0.2):
        """Score a stored solution on a prediction cube."""
        fw = FitnessWeights(w_a, w_p, w_r)
        evaluate_solution_file(cube, solution, fw, out, class_count)

    def gen_synthetic(self, out: str = "data/synthetic", n_regions: int = 500,
                      channels: Sequence[int] = (8, 8, 8), class_count: int = 4, seed: int = 2023,
                      separation: float = 1.5):
        """Write a reproducible Gaussian-blob dataset with its schema sidecar."""
        if isinstance(channels, int):
            channels = (channels,)
        dataset = generate_synthetic(n_regions, tuple(int(d) for d in channels), class_count, seed, separation)
        path = os.path.join(out, "regions.csv")
        write_dataset(dataset, path, schema_path=os.path.join(out, "regions.schema.json"))
        logger.info(f"dataset written to {path}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        fire.Fire(SwarmEnsembleCLI, command=list(argv) if argv is not None else None, name="swarm_ensemble")
    except fire.core.FireExit as e:
        # usage errors exit 1, --help exits 0
        return 0 if not e.code else 1
    except SwarmEnsembleError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
