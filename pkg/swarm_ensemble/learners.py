import logging
import os
from dataclasses import dataclass
from functools import cached_property
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics.pairwise import euclidean_distances
from sklearn.preprocessing import StandardScaler

from .arguments import LearnerArguments
from .dataset import Dataset
from .errors import DataError
from .utils import derive_seed, parallel_map

logger = logging.getLogger(__name__)

CUBE_COLUMNS = ["extractor", "classifier", "region_id", "truth", "predicted"]


class LearnerKind(str, Enum):
    KNN = "knn"
    LinearSVM = "linear_svm"
    MLP = "mlp"
    DecisionTreeC45 = "c45"
    GaussianNB = "gaussian_nb"


def _first_max(scores: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the smaller class index on ties.
    return np.argmax(scores, axis=1)


class KNNClassifier:
    """Euclidean k-nearest-neighbour majority vote."""

    def __init__(self, n_classes: int, k: int = 5):
        self.n_classes = n_classes
        self.k = k

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KNNClassifier":
        self.X_train = X
        self.y_train = y
        self._train_norms = np.einsum("ij,ij->i", X, X)[None, :]
        return self

    def predict(self, X: np.ndarray, chunk_size: int = 256) -> np.ndarray:
        k = min(self.k, len(self.X_train))
        labels = np.empty(len(X), dtype=np.int64)
        for start in range(0, len(X), chunk_size):
            block = X[start:start + chunk_size]
            # squared distances keep the neighbour ordering of the Euclidean ones
            distances = euclidean_distances(block, self.X_train, Y_norm_squared=self._train_norms, squared=True)
            # stable sort: equidistant neighbours are taken in training order
            neighbours = np.argsort(distances, axis=1, kind="stable")[:, :k]
            votes = np.zeros((len(block), self.n_classes), dtype=np.int64)
            np.add.at(votes, (np.arange(len(block))[:, None], self.y_train[neighbours]), 1)
            labels[start:start + chunk_size] = _first_max(votes)
        return labels


class LinearSVMClassifier:
    """One-vs-rest linear SVM fitted by full-batch subgradient descent on the regularised hinge loss."""

    def __init__(self, n_classes: int, c: float = 10.0, epochs: int = 300, learning_rate: float = 0.5):
        self.n_classes = n_classes
        self.c = c
        self.epochs = epochs
        self.learning_rate = learning_rate

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearSVMClassifier":
        n, d = X.shape
        lam = 1.0 / (self.c * n)
        self.coef_ = np.zeros((self.n_classes, d))
        self.intercept_ = np.zeros(self.n_classes)
        self.present_ = np.isin(np.arange(self.n_classes), y)
        for c in np.flatnonzero(self.present_):
            target = np.where(y == c, 1.0, -1.0)
            w, b = np.zeros(d), 0.0
            for t in range(self.epochs):
                eta = self.learning_rate / np.sqrt(t + 1.0)
                active = target * (X @ w + b) < 1.0
                grad_w = lam * w - (target[active, None] * X[active]).sum(axis=0) / n
                grad_b = -target[active].sum() / n
                w -= eta * grad_w
                b -= eta * grad_b
            self.coef_[c], self.intercept_[c] = w, b
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = X @ self.coef_.T + self.intercept_
        scores[:, ~self.present_] = -np.inf
        return _first_max(scores)


class MLPClassifier:
    """One logistic hidden layer, softmax output, full-batch gradient descent on cross-entropy."""

    def __init__(self, n_classes: int, hidden: int = 32, learning_rate: float = 0.5, epochs: int = 500,
                 seed: int = 0):
        self.n_classes = n_classes
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed

    @staticmethod
    def _sigmoid(z: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))

    def _forward(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        h = self._sigmoid(X @ self.W1 + self.b1)
        logits = h @ self.W2 + self.b2
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return h, p / p.sum(axis=1, keepdims=True)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "MLPClassifier":
        n, d = X.shape
        rng = np.random.Generator(np.random.PCG64(self.seed))
        self.W1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, self.hidden))
        self.b1 = np.zeros(self.hidden)
        self.W2 = rng.normal(0.0, 1.0 / np.sqrt(self.hidden), size=(self.hidden, self.n_classes))
        self.b2 = np.zeros(self.n_classes)
        onehot = np.eye(self.n_classes)[y]
        for _ in range(self.epochs):
            h, p = self._forward(X)
            delta_out = (p - onehot) / n
            delta_hidden = (delta_out @ self.W2.T) * h * (1.0 - h)
            self.W2 -= self.learning_rate * (h.T @ delta_out)
            self.b2 -= self.learning_rate * delta_out.sum(axis=0)
            self.W1 -= self.learning_rate * (X.T @ delta_hidden)
            self.b1 -= self.learning_rate * delta_hidden.sum(axis=0)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _first_max(self._forward(X)[1])


def _entropy(counts: np.ndarray) -> np.ndarray:
    """Entropy in bits of class-count rows; works on (..., n_classes) arrays."""
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / np.maximum(totals, 1), 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=-1)


@dataclass
class _Node:
    label: int
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None


class C45Classifier:
    """Gain-ratio decision tree with binary threshold splits on continuous features, unpruned."""

    def __init__(self, n_classes: int, max_depth: int = 10, min_samples_leaf: int = 1):
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def _best_split(self, X: np.ndarray, y: np.ndarray) -> Optional[Tuple[int, float]]:
        n = len(y)
        total = np.bincount(y, minlength=self.n_classes)
        parent = _entropy(total)
        best, best_ratio = None, -np.inf
        lo, hi = self.min_samples_leaf, n - self.min_samples_leaf
        for f in range(X.shape[1]):
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            left = np.cumsum(np.eye(self.n_classes, dtype=np.int64)[ys], axis=0)[:-1]
            cut = np.arange(1, n)
            valid = (xs[1:] > xs[:-1]) & (cut >= lo) & (cut <= hi)
            if not valid.any():
                continue
            left, cut = left[valid], cut[valid]
            right = total - left
            share = cut / n
            gain = parent - share * _entropy(left) - (1.0 - share) * _entropy(right)
            split_info = -(share * np.log2(share) + (1.0 - share) * np.log2(1.0 - share))
            ratio = gain / split_info
            i = int(np.argmax(ratio))
            if ratio[i] > best_ratio + 1e-12:
                pos = np.flatnonzero(valid)[i]
                best, best_ratio = (f, 0.5 * (xs[pos] + xs[pos + 1])), ratio[i]
        return best

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> _Node:
        counts = np.bincount(y, minlength=self.n_classes)
        node = _Node(label=int(np.argmax(counts)))
        if depth >= self.max_depth or np.count_nonzero(counts) <= 1:
            return node
        split = self._best_split(X, y)
        if split is None:
            return node
        node.feature, node.threshold = split
        mask = X[:, node.feature] <= node.threshold
        node.left = self._grow(X[mask], y[mask], depth + 1)
        node.right = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def fit(self, X: np.ndarray, y: np.ndarray) -> "C45Classifier":
        self.root_ = self._grow(X, y, 0)
        return self

    def _predict_one(self, x: np.ndarray) -> int:
        node = self.root_
        while node.left is not None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self._predict_one(x) for x in X], dtype=np.int64)


class GaussianNBClassifier:
    def __init__(self, n_classes: int, var_floor: float = 1e-9):
        self.n_classes = n_classes
        self.var_floor = var_floor

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GaussianNBClassifier":
        d = X.shape[1]
        self.theta_ = np.zeros((self.n_classes, d))
        self.var_ = np.ones((self.n_classes, d))
        self.log_prior_ = np.full(self.n_classes, -np.inf)
        for c in np.unique(y):
            members = X[y == c]
            self.theta_[c] = members.mean(axis=0)
            self.var_[c] = np.maximum(members.var(axis=0), self.var_floor)
            self.log_prior_[c] = np.log(len(members) / len(y))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        log_norm = -0.5 * np.log(2.0 * np.pi * self.var_).sum(axis=1)
        sq = ((X[:, None, :] - self.theta_[None]) ** 2 / self.var_[None]).sum(axis=2)
        return _first_max(self.log_prior_ + log_norm - 0.5 * sq)


# distance and gradient methods see z-scored features, trees and NB see raw ones
_STANDARDIZED = {LearnerKind.KNN, LearnerKind.LinearSVM, LearnerKind.MLP}


def _make_model(kind: LearnerKind, n_classes: int, args: LearnerArguments, seed: int):
    if kind is LearnerKind.KNN:
        return KNNClassifier(n_classes, k=args.knn_k)
    if kind is LearnerKind.LinearSVM:
        return LinearSVMClassifier(n_classes, c=args.svm_c, epochs=args.svm_epochs,
                                   learning_rate=args.svm_learning_rate)
    if kind is LearnerKind.MLP:
        return MLPClassifier(n_classes, hidden=args.mlp_hidden, learning_rate=args.mlp_learning_rate,
                             epochs=args.mlp_epochs, seed=seed)
    if kind is LearnerKind.DecisionTreeC45:
        return C45Classifier(n_classes, max_depth=args.tree_max_depth,
                             min_samples_leaf=args.tree_min_samples_leaf)
    return GaussianNBClassifier(n_classes, var_floor=args.nb_var_floor)


@dataclass(frozen=True, eq=False)
class TrainedLearner:
    kind: LearnerKind
    channel_index: int
    classifier_index: int
    class_count: int
    dim: int
    model: object
    scaler: Optional[StandardScaler] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DataError(f"learner ({self.channel_index}, {self.classifier_index}) expects "
                            f"{self.dim}-dimensional features, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature value")
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return self.model.predict(X).astype(np.int64)


def train_base_learner(kind: LearnerKind, channel_data: np.ndarray, labels: np.ndarray, class_count: int,
                       args: Optional[LearnerArguments] = None, seed: int = 0, channel_index: int = 0,
                       classifier_index: int = 0) -> TrainedLearner:
    kind = LearnerKind(kind)
    args = args or LearnerArguments()
    X = np.asarray(channel_data, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise DataError("empty training data")
    if len(y) != len(X):
        raise DataError(f"{len(X)} feature rows but {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value in training data")
    if y.min() < 0 or y.max() > class_count:
        raise DataError(f"training labels outside 0..{class_count}")
    if len(np.unique(y)) < 2:
        raise DataError(f"single-class training data (label {int(y[0])})")

    scaler = None
    if kind in _STANDARDIZED:
        scaler = StandardScaler().fit(X)
        X = scaler.transform(X)
    model = _make_model(kind, class_count + 1, args, seed).fit(X, y)
    return TrainedLearner(kind=kind, channel_index=channel_index, classifier_index=classifier_index,
                          class_count=class_count, dim=X.shape[1], model=model, scaler=scaler)


def predict_one_hot(learner: TrainedLearner, features: np.ndarray) -> np.ndarray:
    label = int(learner.predict(np.asarray(features, dtype=np.float64).reshape(1, -1))[0])
    vote = np.zeros(learner.class_count + 1, dtype=np.int8)
    vote[label] = 1
    return vote


LearnerGrid = Dict[Tuple[int, int], TrainedLearner]


def train_learner_grid(dataset: Dataset, args: LearnerArguments, seed: int, threads: int = 1) -> LearnerGrid:
    """Trains one learner per (feature channel, classifier family) cell."""
    kinds = [LearnerKind(name) for name in args.classifiers]
    cells = [(i, j) for i in range(dataset.n_channels) for j in range(len(kinds))]

    def _train(cell: Tuple[int, int]) -> TrainedLearner:
        i, j = cell
        return train_base_learner(kinds[j], dataset.channels[i], dataset.labels, dataset.class_count, args,
                                  seed=derive_seed(seed, i, j), channel_index=i, classifier_index=j)

    learners = parallel_map(_train, cells, threads)
    logger.info(f"trained {len(learners)} base learners on {len(dataset)} regions")
    return dict(zip(cells, learners))


@dataclass(frozen=True, eq=False)
class PredictionCube:
    """Hard votes of every base learner: `predicted[i, j, k]` is the label of learner (i, j) for region k."""

    region_ids: Tuple[str, ...]
    predicted: np.ndarray
    truth: np.ndarray
    class_count: int

    def __post_init__(self):
        n_fe, n_cl, n = self.predicted.shape
        if len(self.region_ids) != n or self.truth.shape != (n,):
            raise DataError("cube region axis does not match its region ids")
        for name, arr in (("predicted", self.predicted), ("truth", self.truth)):
            if arr.size and (arr.min() < 0 or arr.max() > self.class_count):
                raise DataError(f"{name} label outside 0..{self.class_count}")
        self.predicted.setflags(write=False)
        self.truth.setflags(write=False)

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return (*self.predicted.shape, self.class_count + 1)

    @property
    def grid_shape(self) -> Tuple[int, int]:
        return self.predicted.shape[0], self.predicted.shape[1]

    def __len__(self) -> int:
        return len(self.region_ids)

    @cached_property
    def votes(self) -> np.ndarray:
        """The binary (i, j, k, c) array; one-hot along c by construction."""
        votes = (self.predicted[..., None] == np.arange(self.class_count + 1)).astype(np.int8)
        votes.setflags(write=False)
        return votes

    def take(self, indices: Sequence[int]) -> "PredictionCube":
        idx = np.asarray(indices, dtype=np.int64)
        return PredictionCube(tuple(self.region_ids[k] for k in idx), self.predicted[:, :, idx].copy(),
                              self.truth[idx].copy(), self.class_count)


def build_prediction_cube(learners: LearnerGrid, dataset: Dataset, grid_shape: Optional[Tuple[int, int]] = None,
                          threads: int = 1) -> PredictionCube:
    if grid_shape is None:
        grid_shape = (dataset.n_channels, 1 + max(j for _, j in learners) if learners else 0)
    n_fe, n_cl = grid_shape
    cells = [(i, j) for i in range(n_fe) for j in range(n_cl)]
    missing = [cell for cell in cells if cell not in learners]
    if missing or n_cl == 0:
        raise DataError(f"learner grid is incomplete, missing cells {missing}")
    if n_fe != dataset.n_channels:
        raise DataError(f"grid has {n_fe} extractor rows but the dataset has {dataset.n_channels} channels")
    for (i, j), learner in learners.items():
        if learner.dim != dataset.channel_dims[i] or learner.class_count != dataset.class_count:
            raise DataError(f"learner ({i}, {j}) does not match channel {i} of the dataset")

    rows = parallel_map(lambda cell: learners[cell].predict(dataset.channels[cell[0]]), cells, threads)
    predicted = np.stack(rows).reshape(n_fe, n_cl, len(dataset))
    return PredictionCube(dataset.region_ids, predicted, dataset.labels.copy(), dataset.class_count)


def write_prediction_cube(cube: PredictionCube, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    n_fe, n_cl = cube.grid_shape
    ii, jj, kk = np.meshgrid(np.arange(n_fe), np.arange(n_cl), np.arange(len(cube)), indexing="ij")
    # region-major rows, then extractor, then classifier
    ii, jj, kk = (a.transpose(2, 0, 1).ravel() for a in (ii, jj, kk))
    frame = pd.DataFrame({
        "extractor": ii,
        "classifier": jj,
        "region_id": np.asarray(cube.region_ids, dtype=object)[kk],
        "truth": cube.truth[kk],
        "predicted": cube.predicted[ii, jj, kk],
    })
    frame.to_csv(path, index=False)


def ingest_prediction_cube(path: str, class_count: Optional[int] = None) -> PredictionCube:
    """Reads externally produced votes; region order follows first appearance in the file."""
    if not os.path.exists(path):
        raise DataError(f"cube file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"region_id": str}, keep_default_na=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"{path}: unreadable cube ({e})") from e
    if list(frame.columns) != CUBE_COLUMNS:
        raise DataError(f"{path}: cube header must be {','.join(CUBE_COLUMNS)}")
    if len(frame) == 0:
        raise DataError(f"{path}: empty cube")
    for col in ("extractor", "classifier", "truth", "predicted"):
        values = pd.to_numeric(frame[col], errors="coerce")
        bad = values.isna() | (values != values.round()) | (values < 0)
        if bad.any():
            raise DataError(f"{path}: row {int(np.flatnonzero(bad.to_numpy())[0]) + 2}: malformed {col}")
        frame[col] = values.astype(np.int64)

    dup = frame.duplicated(subset=["extractor", "classifier", "region_id"])
    if dup.any():
        row = frame[dup].iloc[0]
        raise DataError(f"{path}: duplicate vote for ({row.extractor}, {row.classifier}, {row.region_id!r})")

    observed = int(max(frame["truth"].max(), frame["predicted"].max()))
    if class_count is None:
        class_count = max(observed, 1)
    elif observed > class_count:
        raise DataError(f"{path}: label {observed} outside 0..{class_count}")

    region_ids = tuple(pd.unique(frame["region_id"]))
    truth_per_region = frame.groupby("region_id", sort=False)["truth"].nunique()
    conflicting = truth_per_region[truth_per_region > 1]
    if len(conflicting):
        raise DataError(f"{path}: conflicting truth labels for region {conflicting.index[0]}")

    n_fe, n_cl = int(frame["extractor"].max()) + 1, int(frame["classifier"].max()) + 1
    position = {rid: k for k, rid in enumerate(region_ids)}
    kk = frame["region_id"].map(position).to_numpy()
    predicted = np.full((n_fe, n_cl, len(region_ids)), -1, dtype=np.int64)
    predicted[frame["extractor"].to_numpy(), frame["classifier"].to_numpy(), kk] = frame["predicted"].to_numpy()
    incomplete = np.flatnonzero((predicted < 0).any(axis=(0, 1)))
    if len(incomplete):
        raise DataError(f"{path}: incomplete grid for region {region_ids[incomplete[0]]}")

    truth = np.zeros(len(region_ids), dtype=np.int64)
    truth[kk] = frame["truth"].to_numpy()
    cube = PredictionCube(region_ids, predicted, truth, class_count)
    logger.info(f"ingested a {n_fe}x{n_cl} cube over {len(cube)} regions from {path}")
    return cube
