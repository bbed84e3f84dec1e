"""Dimensionless feature vector extracted once per outer iteration.

Every entry is a ratio of competing mechanisms (viscous, capillary,
buoyant, numerical) or an iteration statistic, so a model trained on one
reservoir transfers to others and to other unit systems.

Index  Name
-----  ------------------------------
 0     effective_aspect_ratio
 1     avg_darcy_velocity
 2     avg_total_mobility
 3     max_cfl
 4     max_shock_front_cfl
 5     shock_front_number_ratio
 6     avg_shock_front_mobility_ratio
 7     avg_long_capillary
 8     avg_trans_capillary
 9     avg_buoyancy
10     avg_long_buoyancy
11     avg_trans_buoyancy
12     avg_artificial_diffusion
13     residual
14     residual_old
15     residual_ratio
16     inner_iters_prev
"""

from dataclasses import dataclass

import numpy as np

from . import rockfluid as rf

FEATURE_NAMES = (
    "effective_aspect_ratio",
    "avg_darcy_velocity",
    "avg_total_mobility",
    "max_cfl",
    "max_shock_front_cfl",
    "shock_front_number_ratio",
    "avg_shock_front_mobility_ratio",
    "avg_long_capillary",
    "avg_trans_capillary",
    "avg_buoyancy",
    "avg_long_buoyancy",
    "avg_trans_buoyancy",
    "avg_artificial_diffusion",
    "residual",
    "residual_old",
    "residual_ratio",
    "inner_iters_prev",
)
N_FEATURES = len(FEATURE_NAMES)
VELOCITY_EPS = 1e-30
# faces slower than this fraction of the fastest face carry only round-off
VELOCITY_RTOL = 1e-9


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != N_FEATURES:
            raise FeatureError(f"feature vector needs {N_FEATURES} entries, got {v.size}")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise FeatureError(f"non-finite feature {FEATURE_NAMES[bad[0]]!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return N_FEATURES

    def __getitem__(self, key):
        if isinstance(key, str):
            key = FEATURE_NAMES.index(key)
        return float(self.values[key])

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def as_dict(self):
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


def _main_axis(model):
    from .model import FACES
    return FACES[model.bc.inflow][0]


def _outflow_sums(model, state):
    con = model.connectivity
    F = state.flux_t
    out = np.zeros(model.n_cells)
    np.add.at(out, con.a, np.maximum(F, 0.0))
    np.add.at(out, con.b, np.maximum(-F, 0.0))
    np.add.at(out, model.outflow.cells, np.maximum(state.flux_out, 0.0))
    return out


def cfl_field(model, state):
    """Per-cell CFL number and its maximum."""
    cfl = state.dt * _outflow_sums(model, state) / model.pore_volume
    return cfl, float(cfl.max()) if cfl.size else 0.0


def shock_front_cfl(model, state, cfl=None):
    """``(max shock-front CFL, shock-front number ratio)``."""
    if cfl is None:
        cfl, _ = cfl_field(model, state)
    slope = rf.max_fw_slope(model.rock_fluid, model.fluid)
    return _shock_front_from_cfl(cfl, slope)


def _shock_front_from_cfl(cfl, slope):
    max_cfl = float(cfl.max()) if cfl.size else 0.0
    max_sf = max_cfl * slope
    ratio = max_sf / max_cfl if max_cfl > 0 else 0.0
    return max_sf, ratio


def mobility_features(model, state):
    """``(avg_total_mobility, avg_shock_front_mobility_ratio)``."""
    rfp, fl = model.rock_fluid, model.fluid
    lt = rf.total_mobility(state.Sw, rfp, fl)
    s_front, _ = rf.welge_tangent(rfp, fl)
    ratio = float(rf.total_mobility(s_front, rfp, fl) / rf.total_mobility(rfp.Swi, rfp, fl))
    return float(np.mean(lt * fl.mu_nw)), ratio


def _face_terms(model, state):
    con = model.connectivity
    lt = rf.total_mobility(state.Sw, model.rock_fluid, model.fluid)
    lt_f = 0.5 * (lt[con.a] + lt[con.b])
    k_face = con.trans * con.dist / con.area
    u = np.abs(state.flux_t) / con.area
    floor = max(VELOCITY_EPS, VELOCITY_RTOL * float(u.max())) if u.size else VELOCITY_EPS
    moving = u > floor
    u_safe = np.where(moving, u, 1.0)
    longitudinal = con.axis == _main_axis(model)
    return lt_f, k_face, u_safe, moving, longitudinal


def _split_means(values, longitudinal):
    def mean(mask):
        return float(values[mask].mean()) if mask.any() else 0.0
    return mean(longitudinal), mean(~longitudinal)


def capillary_numbers(model, state):
    """Average longitudinal and transverse capillary numbers over faces."""
    con = model.connectivity
    if con.a.size == 0:
        return 0.0, 0.0
    pc = rf.capillary_pressure(state.Sw, model.rock_fluid)
    lt_f, k_face, u, moving, longitudinal = _face_terms(model, state)
    dpc = np.abs(pc[con.a] - pc[con.b])
    n_cap = np.where(moving, lt_f * k_face * dpc / (u * con.dist), 0.0)
    return _split_means(n_cap, longitudinal)


def buoyancy_numbers(model, state):
    """``(avg, avg_longitudinal, avg_transverse)`` buoyancy numbers."""
    con = model.connectivity
    if con.a.size == 0:
        return 0.0, 0.0, 0.0
    drho = abs(model.fluid.rho_w - model.fluid.rho_nw)
    g_axis = np.abs(np.asarray(model.gravity))[con.axis]
    lt_f, k_face, u, moving, longitudinal = _face_terms(model, state)
    n_b = np.where(moving, drho * g_axis * lt_f * k_face / u, 0.0)
    return (float(n_b.mean()),) + _split_means(n_b, longitudinal)


def cell_speed(model, state):
    """Magnitude of the cell-centred total Darcy velocity [m/s]."""
    con = model.connectivity
    n = model.n_cells
    comp = np.zeros((n, 3))
    u = state.flux_t / con.area
    for axis in range(3):
        m = con.axis == axis
        np.add.at(comp[:, axis], con.a[m], 0.5 * u[m])
        np.add.at(comp[:, axis], con.b[m], 0.5 * u[m])
    # boundary faces contribute their half of the average
    out = model.outflow
    np.add.at(comp[:, out.axis], out.cells, 0.5 * state.flux_out / out.area)
    inj = model.inflow
    np.add.at(comp[:, inj.axis], inj.cells, 0.5 * model.bc.injection_flux)
    return np.linalg.norm(comp, axis=1)


def artificial_diffusion(speed, dx, cfl, phi, dt):
    """Dimensionless upwind numerical diffusion ``D dt / (phi dx^2)``."""
    D = np.maximum(0.0, 0.5 * speed * dx * (1.0 - cfl))
    return D * dt / (phi * dx ** 2)


def artificial_diffusion_number(model, state, cfl=None):
    if cfl is None:
        cfl, _ = cfl_field(model, state)
    dx = model.spacing[_main_axis(model)]
    nd = artificial_diffusion(cell_speed(model, state), dx, cfl, model.phi, state.dt)
    return float(nd.mean())


def effective_aspect_ratio(model):
    lx, _, lz = model.lengths
    return (lx / lz) * np.sqrt(model.kz.mean() / model.kx.mean())


def extract(model, state, residual, residual_old, inner_prev):
    """Assemble the feature vector for the current outer iteration."""
    cfl, max_cfl = cfl_field(model, state)
    max_sf, sf_ratio = _shock_front_from_cfl(cfl, rf.max_fw_slope(model.rock_fluid, model.fluid))
    lt_avg, mob_ratio = mobility_features(model, state)
    cap_long, cap_trans = capillary_numbers(model, state)
    b_avg, b_long, b_trans = buoyancy_numbers(model, state)
    q = model.bc.injection_flux
    con = model.connectivity
    u_avg = float(np.mean(np.abs(state.flux_t) / con.area)) / q if (q > 0 and con.a.size) else 0.0
    ratio = residual / residual_old if residual_old > 0 else 1.0
    values = [
        effective_aspect_ratio(model), u_avg, lt_avg, max_cfl, max_sf, sf_ratio, mob_ratio,
        cap_long, cap_trans, b_avg, b_long, b_trans,
        artificial_diffusion_number(model, state, cfl),
        residual, residual_old, ratio, float(inner_prev),
    ]
    for name, v in zip(FEATURE_NAMES, values):
        if not np.isfinite(v):
            raise FeatureError(f"non-finite feature {name!r}")
    return FeatureVector(np.array(values))
