"""
Batch-incremental learning on a drifting stream
===============================================

A boosted surrogate is trained on one region of feature space.  Halfway
through the stream the inputs move to a region it has never seen.  The
frozen model keeps its error; the online one adds a residual tree every
50 samples and slowly recovers.
"""

import numpy as np

from mlrelax import mlcore
from mlrelax import online

X0, y0 = online.synthetic_stream(2000, seed=0)
model = mlcore.fit_boosted((X0, y0), n_rounds=100, learning_rate=0.1, max_depth=3)

X, y = online.synthetic_stream(600, seed=1, drift_at=300)
frozen = online.stream_replay(X, y, model, online.frozen(), window=50)
adaptive = online.stream_replay(X, y, model, online.OnlineConfig(strategy="boosting", W=50))

print("window  frozen  online")
for i, (a, b) in enumerate(zip(frozen.window_rmse, adaptive.window_rmse)):
    mark = "  <- drift" if i * 50 == 300 else ""
    print(f"{i:6d}  {a:6.3f}  {b:6.3f}{mark}")
print(f"{adaptive.n_updates} updates, ensemble grew from {model.n_trees} to {adaptive.ensemble.n_trees} trees")
