import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold

from .errors import ConfigError, DataError
from .utils import read_json, write_json

logger = logging.getLogger(__name__)

BACKGROUND = 0


@dataclass(frozen=True)
class DatasetSchema:
    """Channel declaration read from the JSON sidecar: `{"channels": [d0, ...], "class_count": C}`."""

    channel_dims: Tuple[int, ...]
    class_count: int

    def __post_init__(self):
        if len(self.channel_dims) == 0:
            raise DataError("schema declares no feature channels")
        if any(int(d) < 1 for d in self.channel_dims):
            raise DataError(f"channel dimensionalities must be positive, got {list(self.channel_dims)}")
        if self.class_count < 1:
            raise DataError(f"class_count must be at least 1, got {self.class_count}")

    @property
    def columns(self) -> List[str]:
        cols = ["region_id", "label"]
        for i, dim in enumerate(self.channel_dims):
            cols.extend(f"ch{i}_f{f}" for f in range(dim))
        return cols

    @classmethod
    def from_file(cls, path: str) -> "DatasetSchema":
        if not os.path.exists(path):
            raise DataError(f"schema file not found: {path}")
        raw = read_json(path)
        try:
            return cls(channel_dims=tuple(int(d) for d in raw["channels"]), class_count=int(raw["class_count"]))
        except (KeyError, TypeError) as e:
            raise DataError(f"{path}: schema must define 'channels' and 'class_count' ({e})") from e

    def save(self, path: str) -> None:
        write_json({"channels": list(self.channel_dims), "class_count": self.class_count}, path)


@dataclass(frozen=True)
class LabeledRegion:
    region_id: str
    label: int
    features: Tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled regions stored column-wise: one (n, d_i) matrix per feature channel."""

    region_ids: Tuple[str, ...]
    labels: np.ndarray
    channels: Tuple[np.ndarray, ...]
    class_count: int
    channel_dims: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "channel_dims", tuple(int(m.shape[1]) for m in self.channels))
        n = len(self.region_ids)
        assert self.labels.shape == (n,), "labels do not match region ids"
        assert all(m.shape[0] == n for m in self.channels), "channel rows do not match region ids"
        for arr in (self.labels, *self.channels):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.region_ids)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def class_counts(self) -> Dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    @property
    def regions(self) -> List[LabeledRegion]:
        return [
            LabeledRegion(rid, int(self.labels[k]), tuple(m[k] for m in self.channels))
            for k, rid in enumerate(self.region_ids)
        ]

    @property
    def schema(self) -> DatasetSchema:
        return DatasetSchema(self.channel_dims, self.class_count)

    def take(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            region_ids=tuple(self.region_ids[k] for k in idx),
            labels=self.labels[idx].copy(),
            channels=tuple(m[idx].copy() for m in self.channels),
            class_count=self.class_count,
        )


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: Mapping[str, int]
    seed: int

    def folds_for(self, region_ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.assignments[rid] for rid in region_ids], dtype=np.int64)
        except KeyError as e:
            raise DataError(f"region {e.args[0]} is not covered by the fold plan") from e

    def fold_sizes(self) -> List[int]:
        counts = np.bincount(np.fromiter(self.assignments.values(), dtype=np.int64), minlength=self.k)
        return counts.tolist()


def _row_error(path: str, line: int, message: str) -> DataError:
    return DataError(f"{path}: row {line}: {message}")


def load_dataset(path: str, schema: DatasetSchema) -> Dataset:
    """Reads the region CSV, validating every row against the channel declaration."""
    if not os.path.exists(path):
        raise DataError(f"dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise DataError(f"{path}: missing header row") from e
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: malformed row ({e})") from e

    expected = schema.columns
    header = list(frame.columns)
    if header != expected:
        if len(header) != len(expected):
            raise DataError(
                f"{path}: channel dimensionality mismatch, header has {len(header) - 2} feature columns, "
                f"schema declares {len(expected) - 2}"
            )
        bad = next(h for h, e in zip(header, expected) if h != e)
        raise DataError(f"{path}: unexpected header column {bad!r}")
    if len(frame) == 0:
        raise DataError(f"{path}: empty dataset")

    ids = frame["region_id"].tolist()
    labels = np.empty(len(frame), dtype=np.int64)
    matrix = np.empty((len(frame), len(expected) - 2), dtype=np.float64)
    seen = set()
    for k, row in enumerate(frame.itertuples(index=False, name=None)):
        line = k + 2
        rid = row[0]
        # short rows come back padded with NaN floats
        if any(not isinstance(v, str) or v == "" for v in row):
            raise _row_error(path, line, "malformed row, empty field")
        if rid in seen:
            raise _row_error(path, line, f"duplicate region_id {rid!r}")
        seen.add(rid)
        try:
            label = int(row[1])
        except ValueError:
            raise _row_error(path, line, f"malformed label {row[1]!r}") from None
        if not 0 <= label <= schema.class_count:
            raise _row_error(path, line, f"label {label} outside 0..{schema.class_count}")
        labels[k] = label
        try:
            values = np.array([float(v) for v in row[2:]], dtype=np.float64)
        except ValueError:
            raise _row_error(path, line, "malformed feature value") from None
        if not np.all(np.isfinite(values)):
            raise _row_error(path, line, "non-finite feature value")
        matrix[k] = values

    bounds = np.cumsum((0,) + schema.channel_dims)
    channels = tuple(matrix[:, bounds[i]:bounds[i + 1]].copy() for i in range(len(schema.channel_dims)))
    dataset = Dataset(region_ids=tuple(ids), labels=labels, channels=channels, class_count=schema.class_count)
    logger.info(f"loaded {len(dataset)} regions from {path}, class counts {dataset.class_counts}")
    return dataset


def write_dataset(dataset: Dataset, path: str, schema_path: Optional[str] = None) -> None:
    """Writes the region CSV (and optionally its schema sidecar) in the layout `load_dataset` reads."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    columns = dataset.schema.columns
    frame = pd.DataFrame(np.hstack(dataset.channels), columns=columns[2:])
    frame.insert(0, "label", dataset.labels)
    frame.insert(0, "region_id", list(dataset.region_ids))
    frame.to_csv(path, index=False, float_format="%.17g")
    if schema_path is not None:
        dataset.schema.save(schema_path)


def _class_indices(labels: np.ndarray) -> List[Tuple[int, np.ndarray]]:
    return [(int(c), np.flatnonzero(labels == c)) for c in np.unique(labels)]


def split_holdout(dataset: Dataset, train_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Stratified hold-out split; each class sends round-half-up(N_c * fraction) regions to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.Generator(np.random.PCG64(seed))
    train_idx, test_idx = [], []
    for label, members in _class_indices(dataset.labels):
        n_c = len(members)
        n_train = int(np.floor(n_c * train_fraction + 0.5))
        if n_c >= 2 and not 1 <= n_train <= n_c - 1:
            adjusted = min(max(n_train, 1), n_c - 1)
            logger.warning(
                f"class {label}: {n_c} regions would give {n_train} train / {n_c - n_train} test, "
                f"adjusted to {adjusted} / {n_c - adjusted}"
            )
            n_train = adjusted
        shuffled = rng.permutation(members)
        train_idx.append(shuffled[:n_train])
        test_idx.append(shuffled[n_train:])

    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    train, test = dataset.take(train_idx), dataset.take(test_idx)
    logger.info(f"hold-out split: {len(train)} train / {len(test)} test")
    return train, test


def stratified_kfold_labels(region_ids: Sequence[str], labels: np.ndarray, k: int, seed: int) -> FoldPlan:
    """Stratified K-fold assignment; each class is spread over the folds within ±1 region."""
    if k < 2:
        raise ConfigError("K must be ≥ 2")
    n = len(region_ids)
    if k > n:
        raise ConfigError(f"K={k} exceeds the number of regions ({n})")
    labels = np.asarray(labels)
    counts = {label: len(members) for label, members in _class_indices(labels)}
    for label, n_c in counts.items():
        if n_c < k:
            logger.warning(f"class {label} has {n_c} regions for {k} folds")
    random_state = np.random.RandomState(np.random.MT19937(np.random.SeedSequence(seed)))
    folds = np.empty(n, dtype=np.int64)
    if max(counts.values()) >= k:
        skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=random_state)
        with warnings.catch_warnings():
            # small classes are already reported above
            warnings.simplefilter("ignore", UserWarning)
            for f, (_, held_out) in enumerate(skf.split(np.zeros((n, 1)), labels)):
                folds[held_out] = f
    else:
        # StratifiedKFold refuses when every class is smaller than K: deal the class-sorted shuffle round-robin
        order = random_state.permutation(n)
        order = order[np.argsort(labels[order], kind="stable")]
        folds[order] = np.arange(n) % k
    return FoldPlan(k=k, assignments={rid: int(f) for rid, f in zip(region_ids, folds)}, seed=seed)


def stratified_kfold(dataset: Dataset, k: int, seed: int) -> FoldPlan:
    return stratified_kfold_labels(dataset.region_ids, dataset.labels, k, seed)
