"""Classical comparison models on flattened, standardized wavelet features:
k-nearest neighbours, a Gini random forest and one-vs-rest linear SVMs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .config import from_dict
from .wavelet import FeatureSequence, Standardizer, fit_standardizer

N_CLASSES = 3


def majority(labels, n_classes: int = N_CLASSES) -> int:
    """Most frequent label; ties go to the smallest class index."""
    return int(np.argmax(np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)))


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


# ---------------------------------------------------------------------------
# k-NN


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5


@dataclass
class KnnModel:
    k: int
    X: np.ndarray
    y: np.ndarray


def knn_fit(X, y, cfg: KnnConfig = KnnConfig()) -> KnnModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("k-NN needs a non-empty training set")
    if not 1 <= cfg.k <= len(y):
        raise ValueError(f"k={cfg.k} must lie in [1, {len(y)}]")
    return KnnModel(cfg.k, X, y)


def _sq_distances(A, B):
    # |a|^2 - 2ab + |b|^2, clamped: rounding can push exact duplicates slightly negative
    d = (A * A).sum(1)[:, None] - 2.0 * A @ B.T + (B * B).sum(1)[None, :]
    return np.maximum(d, 0.0)


def knn_predict(model: KnnModel, Q) -> np.ndarray:
    """Majority among the k nearest (Euclidean); equal distances keep training order."""
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    d = _sq_distances(Q, model.X)
    nearest = np.argsort(d, axis=1, kind="stable")[:, : model.k]
    return np.array([majority(model.y[row]) for row in nearest], dtype=np.int64)


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True)
class RfConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_split: int = 2
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_split < 2:
            raise ValueError("min_split must be >= 2")


@dataclass
class Tree:
    # parallel arrays; leaves have feature == -1
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[int] = field(default_factory=list)

    def _add(self, feature=-1, threshold=0.0, value=-1) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.empty(len(X), dtype=np.int64)
        for i, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[i] = self.value[node]
        return out


def _best_split(X, y, idx, features):
    """Lowest weighted Gini over all thresholds of the candidate features.

    Returns (impurity, feature, threshold) or None when every candidate is constant on ``idx``.
    """
    n = len(idx)
    Xs = X[np.ix_(idx, features)]  # (n, f)
    order = np.argsort(Xs, axis=0, kind="stable")
    vals = np.take_along_axis(Xs, order, axis=0)
    onehot = np.eye(N_CLASSES)[y[idx]]  # (n, c)
    left = np.cumsum(onehot[order], axis=0)[:-1]  # (n-1, f, c): counts left of each cut
    total = onehot.sum(axis=0)
    right = total - left
    n_left = np.arange(1, n)[:, None]
    n_right = n - n_left
    g_left = 1.0 - (left**2).sum(-1) / n_left**2
    g_right = 1.0 - (right**2).sum(-1) / n_right**2
    score = (n_left * g_left + n_right * g_right) / n
    valid = vals[1:] > vals[:-1]  # only cut between distinct values
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    flat = int(np.argmin(score.T))  # feature-major, first minimum wins
    fi, pos = divmod(flat, n - 1)
    thr = 0.5 * (vals[pos, fi] + vals[pos + 1, fi])
    if not vals[pos, fi] < thr <= vals[pos + 1, fi] or thr == vals[pos + 1, fi]:
        thr = vals[pos, fi]  # midpoint rounded onto the upper value; cut at the lower one
    return float(score[pos, fi]), int(features[fi]), float(thr)


def fit_tree(X, y, idx, rng: np.random.Generator, max_features: int, cfg: RfConfig) -> Tree:
    tree = Tree()
    d = X.shape[1]
    stack = [(tree._add(), np.asarray(idx), 0)]
    while stack:
        node, rows, depth = stack.pop()
        labels = y[rows]
        tree.value[node] = majority(labels)
        if len(rows) < cfg.min_split or np.all(labels == labels[0]):
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            continue
        # draw max_features candidates; if all are constant here, keep drawing from the rest
        perm = rng.permutation(d)
        split = None
        for start in range(0, d, max_features):
            split = _best_split(X, y, rows, perm[start:start + max_features])
            if split is not None:
                break
        if split is None:
            continue
        _, f, thr = split
        go_left = X[rows, f] <= thr
        tree.feature[node], tree.threshold[node] = f, thr
        tree.left[node] = tree._add()
        tree.right[node] = tree._add()
        stack.append((tree.right[node], rows[~go_left], depth + 1))
        stack.append((tree.left[node], rows[go_left], depth + 1))
    return tree


@dataclass
class RfModel:
    trees: list[Tree]
    bootstrap_indices: list[np.ndarray]
    config: RfConfig


def rf_fit(X, y, cfg: RfConfig = RfConfig()) -> RfModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("random forest needs a non-empty training set")
    n, d = X.shape
    max_features = max(1, int(np.sqrt(d)))
    trees, boots = [], []
    for t in range(cfg.n_trees):
        rng = make_rng(cfg.seed, 40, t)
        idx = rng.integers(0, n, n) if cfg.bootstrap else np.arange(n)
        trees.append(fit_tree(X, y, idx, rng, max_features, cfg))
        boots.append(idx)
    return RfModel(trees, boots, cfg)


def rf_predict(model: RfModel, X) -> np.ndarray:
    votes = np.stack([t.predict(X) for t in model.trees], axis=1)  # (n, trees)
    return np.array([majority(v) for v in votes], dtype=np.int64)


# ---------------------------------------------------------------------------
# linear SVM (one-vs-rest, Pegasos)


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-4
    epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class SvmModel:
    W: np.ndarray  # (classes, d)
    b: np.ndarray  # (classes,)

    def decision(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.W.T + self.b


def _pegasos(Xa, s, lam: float, epochs: int, rng: np.random.Generator) -> np.ndarray:
    """Hinge-loss subgradient descent with step 1/(lam t); bias folded into Xa's last column."""
    n, d = Xa.shape
    w = np.zeros(d)
    t = 0
    radius = 1.0 / np.sqrt(lam)
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = s[i] * (Xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * s[i] * Xa[i]
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
    return w


def svm_fit(X, y, cfg: SvmConfig = SvmConfig(), n_classes: int = N_CLASSES) -> SvmModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    Xa = np.hstack([X, np.ones((len(X), 1))])
    W = np.zeros((n_classes, X.shape[1]))
    b = np.zeros(n_classes)
    for c in range(n_classes):
        s = np.where(y == c, 1.0, -1.0)
        if np.all(s < 0):
            b[c] = -1.0  # class absent from training: never preferred over a seen one
            continue
        w = _pegasos(Xa, s, cfg.lam, cfg.epochs, make_rng(cfg.seed, 50, c))
        W[c], b[c] = w[:-1], w[-1]
    return SvmModel(W, b)


def svm_predict(model: SvmModel, X) -> np.ndarray:
    return np.argmax(model.decision(X), axis=1)


# ---------------------------------------------------------------------------
# common wrapper


@dataclass(frozen=True)
class BaselineConfig:
    knn: KnnConfig = KnnConfig()
    rf: RfConfig = RfConfig()
    svm: SvmConfig = SvmConfig()

    @classmethod
    def from_dict(cls, d: dict | None) -> "BaselineConfig":
        d = dict(d or {})
        parts = {"knn": KnnConfig, "rf": RfConfig, "svm": SvmConfig}
        unknown = set(d) - set(parts)
        if unknown:
            from .config import ConfigError

            raise ConfigError(f"[baselines] unknown key(s): {', '.join(sorted(unknown))}; allowed: knn, rf, svm")
        return cls(**{k: from_dict(c, d.get(k), f"baselines.{k}") for k, c in parts.items()})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def flatten(features: list[FeatureSequence], std: Standardizer) -> np.ndarray:
    return np.stack([((f.values - std.mean) / std.std).reshape(-1) for f in features])


@dataclass
class BaselineClassifier:
    """A fitted baseline bundled with the standardizer of its training features."""

    name: str
    standardizer: Standardizer
    model: object

    def predict(self, features: list[FeatureSequence]) -> np.ndarray:
        from .nn import ShapeError

        width = self.standardizer.mean.size
        for f in features:
            if f.values.shape[1] != width:
                raise ShapeError(f"{self.name} expects {width} feature channels, data has {f.values.shape[1]}")
        X = flatten(features, self.standardizer)
        if self.name == "KNN":
            return knn_predict(self.model, X)
        if self.name == "RF":
            return rf_predict(self.model, X)
        return svm_predict(self.model, X)


def fit_baseline(name: str, features: list[FeatureSequence], labels, cfg: BaselineConfig = BaselineConfig()):
    name = name.upper()
    std = fit_standardizer(features)
    X = flatten(features, std)
    y = np.asarray(labels, dtype=np.int64)
    if name == "KNN":
        model = knn_fit(X, y, cfg.knn)
    elif name == "RF":
        model = rf_fit(X, y, cfg.rf)
    elif name == "SVM":
        model = svm_fit(X, y, cfg.svm)
    else:
        raise ValueError(f"unknown baseline {name!r}")
    return BaselineClassifier(name, std, model)
