"""Strategies that choose the initial relaxation of each outer iteration.

A controller is queried once per outer iteration with the current
feature vector (``select_omega``) and told afterwards how many inner
iterations that choice cost (``report_outcome``).

``dynamic_inner`` tells the solver whether later inner iterations may
adapt the relaxation (Aitken).  Fixed strategies keep it off so that a
fixed relaxation really is fixed, and ``Fixed(1.0)`` is the unrelaxed
solver.  The surrogate keeps it off by default too: its training labels
come from fixed-relaxation runs.
"""

import numpy as np

from . import features as feat
from .mlcore import TrainingSample
from .online import FROZEN, OnlineConfig, OnlineLearner
from .solver import total_iteration_metric  # noqa: F401  (re-exported)

OMEGA_GRID = np.round(np.linspace(0.10, 1.00, 19), 2)
OMEGA_MIN = 0.1


def _check(features):
    if isinstance(features, feat.FeatureVector):
        return features.values
    return feat.FeatureVector(features).values


class RelaxationController:
    name = "controller"
    dynamic_inner = False
    omega_min = OMEGA_MIN

    def __init__(self):
        self.history = []  # (omega0, inner_iters) per outer iteration
        self.samples = []  # one TrainingSample per outcome
        self.last_residuals = (0.0, 0.0)
        self.last_inner = 0

    def select_omega(self, features):
        raise NotImplementedError

    def report_outcome(self, features, omega, inner_iters):
        """Record one outcome; returns True when the model changed."""
        if inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        f = _check(features)
        self.history.append((float(omega), int(inner_iters)))
        self.samples.append(TrainingSample(f, float(omega), float(inner_iters)))
        self.last_residuals = (f[feat.FEATURE_NAMES.index("residual")],
                               f[feat.FEATURE_NAMES.index("residual_old")])
        self.last_inner = int(inner_iters)
        return False

    @property
    def trace(self):
        return np.array([h[0] for h in self.history])


class Fixed(RelaxationController):
    def __init__(self, omega):
        super().__init__()
        if not (OMEGA_MIN <= omega <= 1.0):
            raise ValueError(f"fixed relaxation {omega} outside [{OMEGA_MIN}, 1]")
        self.omega = float(omega)
        self.name = f"fixed-{self.omega:.2f}"

    def select_omega(self, features):
        _check(features)
        return self.omega


class NoRelaxation(Fixed):
    def __init__(self):
        super().__init__(1.0)
        self.name = "no-relax"


class CflDynamic(RelaxationController):
    """Relaxation shrinking with the shock-front CFL number.

    ``omega = clamp(1 / (1 + a * max_shock_front_cfl), omega_min, 1)``
    """

    def __init__(self, a=0.1, omega_min=OMEGA_MIN):
        super().__init__()
        if a < 0:
            raise ValueError("a must be non-negative")
        self.a = float(a)
        self.omega_min = float(omega_min)
        self.name = "cfl-dynamic"

    def select_omega(self, features):
        f = _check(features)
        c = f[feat.FEATURE_NAMES.index("max_shock_front_cfl")]
        return float(np.clip(1.0 / (1.0 + self.a * c), self.omega_min, 1.0))


class MLSurrogate(RelaxationController):
    """Argmin of predicted inner iterations over a relaxation grid.

    With an online config other than frozen, every outcome is buffered and
    the ensemble grows whenever the buffer fills.
    """

    def __init__(self, ensemble, online=None, grid=OMEGA_GRID, dynamic_inner=False):
        super().__init__()
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0 or grid.min() < OMEGA_MIN or grid.max() > 1.0:
            raise ValueError("grid must be a non-empty list within [0.1, 1]")
        self.grid = np.sort(grid)
        self.omega_min = float(self.grid[0])
        self.online = online if online is not None else OnlineConfig(strategy=FROZEN, W=np.inf)
        self.learner = OnlineLearner(ensemble, self.online)
        self.dynamic_inner = dynamic_inner
        self.predicted = []  # surrogate value at each chosen relaxation
        self.name = "ml-frozen" if self.online.strategy == FROZEN else f"ml-online-W{self.online.W:g}"

    @property
    def ensemble(self):
        return self.learner.ensemble

    @property
    def events(self):
        return self.learner.events

    def predictions(self, features):
        return self.ensemble.predict(_check(features), self.grid)

    def select_omega(self, features):
        pred = self.predictions(features)
        omega = select_from_predictions(self.grid, pred)
        self.predicted.append(float(pred[self.grid == omega][0]))
        return omega

    def report_outcome(self, features, omega, inner_iters):
        super().report_outcome(features, omega, inner_iters)
        return self.learner.push(self.samples[-1])


def select_from_predictions(grid, pred):
    """Grid value with the smallest prediction; ties go to the largest."""
    grid = np.asarray(grid, dtype=float)
    pred = np.asarray(pred, dtype=float)
    best = pred.min()
    return float(grid[np.flatnonzero(pred == best)].max())


def make_controller(strategy, ensemble=None, omega=None, W=None, a=None, online_strategy=None,
                    seed=0):
    """Build a controller from a strategy name.

    Names: ``no-relax``, ``fixed`` (needs ``omega``), ``cfl-dynamic``,
    ``ml-frozen`` and ``ml-online`` (need ``ensemble``).
    """
    if strategy == "no-relax":
        return NoRelaxation()
    if strategy == "fixed":
        if omega is None:
            raise ValueError("fixed strategy needs omega")
        return Fixed(omega)
    if strategy == "cfl-dynamic":
        return CflDynamic() if a is None else CflDynamic(a)
    if strategy in ("ml-frozen", "ml-online"):
        if ensemble is None:
            raise ValueError(f"{strategy} needs a trained model")
        if strategy == "ml-frozen":
            return MLSurrogate(ensemble)
        kind = online_strategy or ("boosting" if ensemble.mode == "boosted" else "bagging")
        return MLSurrogate(ensemble, OnlineConfig(strategy=kind, W=50 if W is None else W, seed=seed))
    raise ValueError(f"unknown strategy {strategy!r}")
