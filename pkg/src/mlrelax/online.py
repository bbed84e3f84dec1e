"""Batch-incremental updates of a tree ensemble during a simulation.

Samples accumulate in a buffer of size ``W``.  When it fills, the
ensemble grows (never shrinks) and the buffer is flushed:

* boosting: one new shallow tree fitted to the residuals of the current
  ensemble on the buffer, added with a small learning rate;
* bagging: a batch of deep bootstrap trees fitted to the buffer, averaged
  with all previous members.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import mlcore
from .mlcore import BAGGING, BOOSTED, TreeEnsemble, derive_seed

BOOSTING = "boosting"
FROZEN = "frozen"
STRATEGIES = (BOOSTING, "bagging", FROZEN)


@dataclass(frozen=True)
class OnlineConfig:
    strategy: str = BOOSTING
    W: float = 50
    # boosting update
    boost_new_trees: int = 1
    boost_learning_rate: float = 0.01
    boost_max_depth: int = 3
    boost_row_subsample: float = 1.0
    boost_col_subsample: float = 1.0
    # bagging update
    bag_new_trees: int = 70
    bag_max_depth: int = 30
    bag_max_features: float = 0.2
    min_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown online strategy {self.strategy!r}")
        if not (self.W >= 1):
            raise ValueError("buffer size W must be >= 1")


def frozen(W=math.inf):
    return OnlineConfig(strategy=FROZEN, W=W)


@dataclass
class OnlineBuffer:
    capacity: float
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    @property
    def full(self):
        return len(self.samples) >= self.capacity

    def arrays(self):
        return mlcore.to_arrays(self.samples)

    def flush(self):
        self.samples = []


@dataclass(frozen=True)
class UpdateEvent:
    index: int
    n_samples: int
    rmse_before: float
    rmse_after: float
    n_trees: int


def update_boosting(ensemble, X, y, config=OnlineConfig(), seed=0):
    """Append ``boost_new_trees`` residual trees; earlier trees are untouched."""
    if ensemble.mode != BOOSTED:
        raise ValueError("boosting update needs a boosted ensemble")
    rng = np.random.default_rng(seed)
    trees = list(ensemble.trees)
    weights = list(ensemble.weights)
    current = ensemble.predict_matrix(X)
    lr = config.boost_learning_rate
    for i in range(config.boost_new_trees):
        rows = np.arange(y.size)
        if config.boost_row_subsample < 1.0:
            m = max(1, int(round(config.boost_row_subsample * y.size)))
            rows = np.sort(rng.choice(y.size, m, replace=False))
        tree = mlcore.fit_tree_arrays(X[rows], (y - current)[rows], config.boost_max_depth,
                                      config.min_leaf, config.boost_col_subsample,
                                      derive_seed(seed, i))
        trees.append(tree)
        weights.append(lr)
        current = current + lr * tree.predict(X)
    return replace(ensemble, trees=trees, weights=weights)


def update_bagging(ensemble, X, y, config=OnlineConfig(strategy="bagging"), seed=0):
    """Append ``bag_new_trees`` bootstrap trees fitted on the buffer."""
    if ensemble.mode != BAGGING:
        raise ValueError("bagging update needs a bagging ensemble")
    new = [mlcore._bootstrap_tree(X, y, config.bag_max_depth, config.min_leaf,
                                  config.bag_max_features, derive_seed(seed, i))
           for i in range(config.bag_new_trees)]
    return replace(ensemble, trees=list(ensemble.trees) + new)


def apply_update(ensemble, X, y, config, seed=0):
    if config.strategy == BOOSTING:
        return update_boosting(ensemble, X, y, config, seed)
    if config.strategy == "bagging":
        return update_bagging(ensemble, X, y, config, seed)
    return ensemble


def push(buffer, sample, ensemble, config, update_index=0):
    """Add one sample; run the strategy update when the buffer fills.

    Returns ``(ensemble, updated)``.  The frozen strategy flushes a full
    buffer without touching the model.
    """
    buffer.samples.append(sample)
    if not buffer.full:
        return ensemble, False
    X, y = buffer.arrays()
    buffer.flush()
    if config.strategy == FROZEN:
        return ensemble, False
    return apply_update(ensemble, X, y, config, derive_seed(config.seed, update_index)), True


class OnlineLearner:
    """Buffer + ensemble pair owned by one simulation."""

    def __init__(self, ensemble, config=OnlineConfig()):
        self.ensemble = ensemble
        self.config = config
        self.buffer = OnlineBuffer(config.W)
        self.events = []

    @property
    def n_updates(self):
        return len(self.events)

    def push(self, sample):
        X = y = None
        if len(self.buffer) + 1 >= self.buffer.capacity and self.config.strategy != FROZEN:
            X, y = mlcore.to_arrays(self.buffer.samples + [sample])
        before = self.ensemble
        self.ensemble, updated = push(self.buffer, sample, self.ensemble, self.config,
                                      update_index=self.n_updates)
        if updated:
            self.events.append(UpdateEvent(
                index=self.n_updates,
                n_samples=y.size,
                rmse_before=mlcore.rmse(before, X, y),
                rmse_after=mlcore.rmse(self.ensemble, X, y),
                n_trees=self.ensemble.n_trees))
        return updated


@dataclass
class ReplayResult:
    predictions: np.ndarray
    window_rmse: np.ndarray
    n_updates: int
    ensemble: TreeEnsemble


def stream_replay(X, y, ensemble, config, window=None):
    """Prequential (test-then-train) evaluation of an ordered stream.

    Each sample is predicted by the current model before it is pushed.
    Window RMSEs use ``window`` samples (defaults to ``W``, or 50 when the
    buffer is unbounded).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    learner = OnlineLearner(ensemble, config)
    preds = np.empty(y.size)
    for i in range(y.size):
        preds[i] = learner.ensemble.predict_matrix(X[i:i + 1])[0]
        learner.push(mlcore.TrainingSample(X[i, :-1], X[i, -1], y[i]))
    if window is None:
        window = int(config.W) if math.isfinite(config.W) else 50
    return ReplayResult(preds, windowed_rmse(preds, y, window), learner.n_updates, learner.ensemble)


def windowed_rmse(pred, actual, window=50):
    """RMSE over consecutive windows; the last window may be shorter."""
    err = (np.asarray(pred, dtype=float) - np.asarray(actual, dtype=float)) ** 2
    n_win = int(math.ceil(err.size / window))
    return np.array([np.sqrt(err[i * window:(i + 1) * window].mean()) for i in range(n_win)])


def synthetic_stream(n, seed=0, drift_at=None, noise=0.5):
    """Ordered ``(X, y)`` stream with a known target, for prequential checks.

    Predictors are uniform on [0, 1] except predictor 0, drawn from
    [0, 0.5], and the relaxation (last column), drawn from the 19-point
    grid.  The target is ``max(1, 2 + 6 x0 + 8 (omega - 0.5)^2 + e)`` with
    ``e ~ N(0, noise^2)``.  From index ``drift_at`` on, x0 is drawn from
    [0.5, 1] instead: a covariate shift into a region absent from any
    model trained on the undrifted stream.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, mlcore.N_PREDICTORS))
    lo = np.zeros(n)
    if drift_at is not None:
        lo[drift_at:] = 0.5
    X[:, 0] = lo + 0.5 * rng.uniform(0.0, 1.0, n)
    X[:, -1] = rng.choice(np.round(np.linspace(0.1, 1.0, 19), 2), n)
    y = 2.0 + 6.0 * X[:, 0] + 8.0 * (X[:, -1] - 0.5) ** 2 + noise * rng.standard_normal(n)
    return X, np.maximum(y, 1.0)
