"""
Training the inner-iteration surrogate
======================================

Generates a small perturbed-scenario dataset, fits a forest that predicts
inner iterations from the 17 features plus the relaxation, and lets the
surrogate pick the relaxation on the reference case.  Pass a simulation
count on the command line (200 reproduces the acceptance setting).
"""

import os
import sys
import tempfile

import numpy as np

from mlrelax import controller as ctl
from mlrelax import datagen, mlcore
from mlrelax import model as mdl
from mlrelax import solver

n_sims = int(sys.argv[1]) if len(sys.argv) > 1 else 40
work = tempfile.mkdtemp(prefix="mlrelax-demo-")
path = os.path.join(work, "dataset.csv")

summary = datagen.generate_dataset(n_sims, seed=7, out_path=path, n_steps=5)
train_path, test_path = datagen.split_dataset(path, 0.8, seed=7)
train, test = datagen.read_samples(train_path), datagen.read_samples(test_path)
print(f"{summary['n_rows']} rows from {n_sims} simulations ({len(train)} train / {len(test)} test)")

forest = mlcore.fit_forest(train, seed=0)
print(f"train RMSE {mlcore.rmse(forest, train):.3f}  test RMSE {mlcore.rmse(forest, test):.3f}")

imp = mlcore.feature_importance(forest)
for i in np.argsort(-imp)[:5]:
    print(f"  {mlcore.PREDICTOR_NAMES[i]:30s} {imp[i]:.3f}")

m = mdl.build_test_case_1()
schedule = solver.Schedule.from_pvi(m, 0.5, 25)
for c in (ctl.NoRelaxation(), ctl.Fixed(0.35), ctl.MLSurrogate(forest)):
    rep = solver.run_simulation(m, c, schedule)
    print(f"{c.name:12s} metric {rep.total_metric:7.1f}  mean relaxation {c.trace.mean():.2f}")
