"""Regression trees, bagged forests and boosted ensembles.

The models regress the inner-iteration count on the 17 features plus the
relaxation factor (18 predictors, relaxation last).  Trees are stored as
flat node arrays so that prediction is a vectorized walk and serialization
is a plain list dump.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_NAMES, N_FEATURES

N_PREDICTORS = N_FEATURES + 1
PREDICTOR_NAMES = FEATURE_NAMES + ("omega",)
MODEL_FORMAT = "mlrelax-ensemble"
MODEL_VERSION = 1

BAGGING = "bagging"
BOOSTED = "boosted"

_MASK64 = (1 << 64) - 1


class ModelFileError(ValueError):
    pass


class IncompatibleModelError(ModelFileError):
    pass


def splitmix64(x):
    """One step of the splitmix64 generator; used to derive member seeds."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master, index):
    return splitmix64((int(master) & _MASK64) + int(index))


@dataclass(frozen=True)
class TrainingSample:
    features: np.ndarray
    omega: float
    inner_iters: float

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float).ravel()
        if f.size != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {f.size}")
        if not (0.0 < self.omega <= 1.0):
            raise ValueError(f"omega {self.omega} outside (0, 1]")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        object.__setattr__(self, "features", f)

    def predictors(self):
        return np.append(self.features, self.omega)


def to_arrays(samples):
    """Stack samples into ``(X, y)`` with the relaxation as last column."""
    samples = list(samples)
    if not samples:
        return np.zeros((0, N_PREDICTORS)), np.zeros(0)
    X = np.array([s.predictors() for s in samples])
    y = np.array([float(s.inner_iters) for s in samples])
    return X, y


def _as_xy(samples, y=None):
    if y is not None:
        return np.asarray(samples, dtype=float), np.asarray(y, dtype=float)
    if isinstance(samples, tuple) and len(samples) == 2:
        return np.asarray(samples[0], dtype=float), np.asarray(samples[1], dtype=float)
    return to_arrays(samples)


# ---------------------------------------------------------------------------
# single tree

@dataclass
class RegressionTree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray  # SSE reduction of the split at each internal node
    n_predictors: int = N_PREDICTORS

    @property
    def n_nodes(self):
        return int(self.feature.size)

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            r = rows[active]
            n = node[active]
            go_left = X[r, f[active]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d, n_predictors=N_PREDICTORS):
        tree = cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=float),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=float),
            gain=np.array(d["gain"], dtype=float),
            n_predictors=n_predictors,
        )
        tree.validate()
        return tree

    def validate(self):
        n = self.n_nodes
        arrays = (self.threshold, self.left, self.right, self.value, self.gain)
        if n == 0 or any(a.size != n for a in arrays):
            raise ModelFileError("tree node arrays are empty or of unequal length")
        internal = self.feature >= 0
        if np.any(self.feature >= self.n_predictors):
            raise ModelFileError("tree references a predictor out of range")
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if kids.size and (kids.min() <= 0 or kids.max() >= n or np.unique(kids).size != kids.size):
            raise ModelFileError("tree child indices are inconsistent")
        if kids.size != n - 1:
            raise ModelFileError("tree has unreachable nodes")


def best_split(X, y, features, min_leaf=1):
    """Best SSE-reducing split over ``features``.

    Returns ``(gain, feature, threshold)`` or ``None``.  Thresholds are
    midpoints of consecutive distinct sorted values; ties go to the lowest
    feature index, then the lowest threshold.
    """
    n = y.size
    if n < 2 * min_leaf:
        return None
    total = y.sum()
    base = total * total / n
    best = None
    lo, hi = max(min_leaf, 1), n - max(min_leaf, 1)
    if lo > hi:
        return None
    n_left = np.arange(lo, hi + 1, dtype=float)
    for j in sorted(features):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cs = np.cumsum(y[order])
        sl = cs[lo - 1:hi]
        sr = total - sl
        gain = sl * sl / n_left + sr * sr / (n - n_left) - base
        valid = xs[lo - 1:hi] < xs[lo:hi + 1]
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        g = float(gain[i])
        if g <= 0:
            continue
        if best is None or g > best[0]:
            a, b = xs[lo - 1 + i], xs[lo + i]
            thr = 0.5 * (a + b)
            if not (a <= thr < b):
                thr = a
            best = (g, j, float(thr))
    return best


def fit_tree_arrays(X, y, max_depth=None, min_leaf=1, max_features_fraction=1.0, rng_seed=0):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("cannot fit a tree on an empty sample set")
    n_pred = X.shape[1]
    k = max(1, int(np.ceil(max_features_fraction * n_pred)))
    rng = np.random.default_rng(rng_seed)
    max_depth = np.inf if max_depth is None else max_depth

    feature, threshold, left, right, value, gain = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        gain.append(0.0)
        return len(feature) - 1

    stack = [(new_node(np.arange(y.size)), np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if depth >= max_depth or idx.size < 2 * min_leaf or np.all(yi == yi[0]):
            continue
        cand = np.arange(n_pred) if k >= n_pred else rng.choice(n_pred, k, replace=False)
        split = best_split(X[idx], yi, cand, min_leaf)
        if split is None:
            continue
        g, j, thr = split
        mask = X[idx, j] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node], gain[node] = j, thr, g
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
        gain=np.array(gain),
        n_predictors=n_pred,
    )


def fit_tree(samples, max_depth=None, min_leaf=5, max_features_fraction=1.0, rng_seed=0, y=None):
    """Fit a CART regression tree.

    ``samples`` is a list of :class:`TrainingSample`, an ``(X, y)`` tuple,
    or a predictor matrix with ``y`` given separately.
    """
    X, y = _as_xy(samples, y)
    return fit_tree_arrays(X, y, max_depth, min_leaf, max_features_fraction, rng_seed)


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class TreeEnsemble:
    mode: str
    trees: list
    base_value: float = 0.0
    learning_rate: float = 1.0
    weights: list = field(default_factory=list)  # per-tree shrinkage, boosted only
    feature_count: int = N_FEATURES
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (BAGGING, BOOSTED):
            raise ValueError(f"unknown ensemble mode {self.mode!r}")
        if self.mode == BAGGING and not self.trees:
            raise ValueError("a bagging ensemble needs at least one tree")
        if self.mode == BOOSTED and len(self.weights) != len(self.trees):
            self.weights = [self.learning_rate] * len(self.trees)

    @property
    def n_trees(self):
        return len(self.trees)

    def member_predictions(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.trees:
            return np.zeros((0, X.shape[0]))
        return np.array([t.predict(X) for t in self.trees])

    def predict_matrix(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.feature_count + 1:
            raise ValueError(f"expected {self.feature_count + 1} predictors, got {X.shape[1]}")
        # sequential accumulation: a row's prediction does not depend on the batch
        if self.mode == BAGGING:
            total = np.zeros(X.shape[0])
            for t in self.trees:
                total += t.predict(X)
            return total / len(self.trees)
        out = np.full(X.shape[0], float(self.base_value))
        for w, t in zip(self.weights, self.trees):
            out += w * t.predict(X)
        return out

    def predict(self, features, omega):
        """Predicted inner iterations for one feature vector at one or more ``omega``."""
        f = np.asarray(features, dtype=float)
        if f.ndim == 1:
            if f.size != self.feature_count:
                raise ValueError(f"expected {self.feature_count} features, got {f.size}")
            om = np.atleast_1d(np.asarray(omega, dtype=float))
            X = np.column_stack([np.tile(f, (om.size, 1)), om])
            out = self.predict_matrix(X)
            return float(out[0]) if np.ndim(omega) == 0 else out
        if f.shape[1] != self.feature_count:
            raise ValueError(f"expected {self.feature_count} features, got {f.shape[1]}")
        om = np.broadcast_to(np.asarray(omega, dtype=float), (f.shape[0],))
        return self.predict_matrix(np.column_stack([f, om]))

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "mode": self.mode,
            "feature_count": self.feature_count,
            "base_value": self.base_value,
            "learning_rate": self.learning_rate,
            "weights": list(map(float, self.weights)),
            "params": self.params,
            "trees": [t.to_dict() for t in self.trees],
        }

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def fit_forest(samples, n_trees=50, max_depth=None, max_features_fraction=0.33, seed=0,
               min_leaf=5, y=None):
    """Bagging ensemble of trees, each grown on a bootstrap resample."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X, y = _as_xy(samples, y)
    if y.size == 0:
        raise ValueError("cannot fit a forest on an empty sample set")
    trees = [_bootstrap_tree(X, y, max_depth, min_leaf, max_features_fraction, derive_seed(seed, i))
             for i in range(n_trees)]
    params = dict(n_trees=n_trees, max_depth=max_depth, max_features_fraction=max_features_fraction,
                  seed=seed, min_leaf=min_leaf)
    return TreeEnsemble(BAGGING, trees, params=params)


def _bootstrap_tree(X, y, max_depth, min_leaf, max_features_fraction, seed):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, y.size, y.size)
    return fit_tree_arrays(X[idx], y[idx], max_depth, min_leaf, max_features_fraction,
                           rng_seed=rng.integers(0, 2 ** 63))


def fit_boosted(samples, n_rounds=100, learning_rate=0.1, max_depth=3, seed=0, min_leaf=5,
                max_features_fraction=1.0, y=None, loss_curve=None):
    """Squared-loss gradient boosting starting from the target mean."""
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    X, y = _as_xy(samples, y)
    if y.size == 0:
        raise ValueError("cannot fit a boosted ensemble on an empty sample set")
    base = float(y.mean())
    pred = np.full(y.size, base)
    trees = []
    for i in range(n_rounds):
        tree = fit_tree_arrays(X, y - pred, max_depth, min_leaf, max_features_fraction,
                               derive_seed(seed, i))
        trees.append(tree)
        pred = pred + learning_rate * tree.predict(X)
        if loss_curve is not None:
            loss_curve.append(float(np.mean((y - pred) ** 2)))
    params = dict(n_rounds=n_rounds, max_depth=max_depth, seed=seed, min_leaf=min_leaf,
                  max_features_fraction=max_features_fraction)
    return TreeEnsemble(BOOSTED, trees, base_value=base, learning_rate=learning_rate,
                        weights=[learning_rate] * n_rounds, params=params)


def predict(ensemble, features, omega):
    return ensemble.predict(features, omega)


def rmse(ensemble, samples, y=None):
    X, y = _as_xy(samples, y)
    if y.size == 0:
        raise ValueError("rmse of an empty sample set")
    return float(np.sqrt(np.mean((ensemble.predict_matrix(X) - y) ** 2)))


def feature_importance(ensemble):
    """Normalized total SSE reduction per predictor (18 entries)."""
    n = ensemble.feature_count + 1
    imp = np.zeros(n)
    for t in ensemble.trees:
        internal = t.feature >= 0
        np.add.at(imp, t.feature[internal], t.gain[internal])
    total = imp.sum()
    return imp / total if total > 0 else imp


# ---------------------------------------------------------------------------
# persistence

def save(ensemble, path):
    with open(path, "w") as fh:
        fh.write(ensemble.dumps())
        fh.write("\n")


def loads(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"malformed model file at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
        raise ModelFileError("not an mlrelax ensemble file")
    if d.get("version") != MODEL_VERSION:
        raise IncompatibleModelError(f"model file version {d.get('version')} is not supported "
                                     f"(expected {MODEL_VERSION})")
    try:
        fc = int(d["feature_count"])
        trees = [RegressionTree.from_dict(t, fc + 1) for t in d["trees"]]
        return TreeEnsemble(d["mode"], trees, base_value=float(d["base_value"]),
                            learning_rate=float(d["learning_rate"]),
                            weights=[float(w) for w in d["weights"]], feature_count=fc,
                            params=d.get("params", {}))
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"model file missing or malformed field: {exc}") from None


def load(path):
    with open(path) as fh:
        return loads(fh.read())
