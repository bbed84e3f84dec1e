"""
Buckley-Leverett front against the Welge construction
=====================================================

A 1D horizontal column without capillarity.  The shock saturation and
speed come from the tangent to the fractional-flow curve drawn from the
initial saturation; the simulated front should sit where that speed puts it.
"""

import numpy as np

from mlrelax import controller as ctl
from mlrelax import model as mdl
from mlrelax import rockfluid as rf
from mlrelax import solver

n, L, phi, q = 200, 100.0, 0.2, 1e-6
params = rf.BrooksCoreyParams(pe=0.0)
m = mdl.build_grid(n, 1, 1, L / n, 1.0, 1.0, phi=np.full(n, phi), gravity=(0.0, 0.0, 0.0),
                   rock_fluid=params, bc=mdl.BoundaryConditions("xmin", q, "xmax", 0.0))

s_front, speed = rf.welge_tangent(params, m.fluid, n_points=100_001)
print(f"front saturation {s_front:.4f}, dimensionless speed {speed:.4f}")

t_end = 0.6 * L * phi / (speed * q)
dt = t_end / 400
rep = solver.run_simulation(m, ctl.NoRelaxation(), solver.Schedule(t_end, dt, dt_max=dt))

x = (np.arange(n) + 0.5) * L / n
level = 0.5 * (s_front + params.Swi)
j = np.flatnonzero(rep.final_Sw > level).max()
x_num = x[j] + (rep.final_Sw[j] - level) / (rep.final_Sw[j] - rep.final_Sw[j + 1]) * (x[j + 1] - x[j])
x_exact = speed * q * t_end / phi
print(f"front at {x_num:.2f} m, analytic {x_exact:.2f} m")

# coarse text profile
for xi in range(0, n, 10):
    print(f"{x[xi]:6.1f} m  {rep.final_Sw[xi]:.3f}  " + "#" * int(60 * rep.final_Sw[xi]))
