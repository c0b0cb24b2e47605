import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Sequence, TypeVar

import numpy as np

from .errors import DataError

_FORMAT = "%(levelname)s %(asctime)s %(filename)s:%(lineno)d] %(message)s"
_DATE_FORMAT = "%m-%d %H:%M:%S"

T = TypeVar("T")
R = TypeVar("R")


def init_logger(verbose: bool = False) -> logging.Logger:
    """Installs a single stderr handler on the package root logger."""
    root = logging.getLogger("swarm_ensemble")
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT, datefmt=_DATE_FORMAT))
        root.addHandler(handler)
    root.propagate = False
    return root


def derive_seed(master_seed: int, *keys: int) -> int:
    """Derives a child seed that depends only on the master seed and the keys."""
    seq = np.random.SeedSequence([int(master_seed), *[int(k) for k in keys]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def substream(master_seed: int, *keys: int) -> np.random.Generator:
    # PCG64 streams are fixed across platforms for a given SeedSequence.
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), *[int(k) for k in keys]])))


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """Maps `fn` over `items` and returns results in input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))


def write_json(obj: Any, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False)
        f.write("\n")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON ({e})") from e


def format_params(params: Iterable[tuple]) -> str:
    return "\n".join(f"{key}: {value}" for key, value in params)
