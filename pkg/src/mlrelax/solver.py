"""Sequential (Picard) two-phase solver with relaxed inner saturation loop.

Time loop -> outer loop (pressure / saturation coupling) -> inner loop
(saturation / velocity).  Pressure uses a TPFA discretization solved by
PCG; transport is implicit Euler with hybrid upwinding (viscous part by
total flux, gravity part by buoyancy direction, capillary part averaged),
linearized about the current iterate once per inner iteration.

Pressure unknown is the wetting-phase pressure; ``p_nw = p + pc``.
"""

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import features as feat
from . import rockfluid as rf
from .linalg import from_triplets, solve_cg


class ConfigurationError(ValueError):
    pass


class SimulationFailure(RuntimeError):
    """Time step could not converge even after the allowed dt halvings."""


@dataclass(frozen=True)
class SolverConfig:
    outer_tol_mass: float = 1e-3
    outer_tol_dsat: float = 1e-2
    max_outer: int = 30
    max_inner: int = 10
    beta: float = 0.4
    omega_min: float = 0.1
    omega_max: float = 1.0
    aitken: bool = True
    cg_tol: float = 1e-10

    def __post_init__(self):
        if self.outer_tol_mass <= 0 or self.outer_tol_dsat <= 0:
            raise ConfigurationError("tolerances must be positive")
        if not (0 < self.omega_min <= self.omega_max <= 1):
            raise ConfigurationError("need 0 < omega_min <= omega_max <= 1")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigurationError("iteration caps must be >= 1")


@dataclass
class SimulationState:
    p: np.ndarray
    Sw: np.ndarray
    Sw_prev1: np.ndarray
    Sw_prev2: np.ndarray
    Sw_old: np.ndarray  # start of the current time step
    flux_t: np.ndarray  # interior-face volumetric fluxes [m^3/s], a -> b
    flux_w: np.ndarray
    flux_out: np.ndarray  # outflow boundary total flux, cell -> outside
    t: float = 0.0
    dt: float = 1.0
    residual: float = 0.0
    residual_old: float = 0.0
    inner_prev: int = 0

    @property
    def flux_nw(self):
        return self.flux_t - self.flux_w

    def face_velocities(self, model):
        """Interior-face Darcy velocities ``(u_t, u_w, u_nw)`` [m/s]."""
        area = model.connectivity.area
        return self.flux_t / area, self.flux_w / area, self.flux_nw / area

    def copy(self):
        return SimulationState(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                                  for k, v in self.__dict__.items()})


def initial_state(model, Sw=None, dt=1.0):
    n = model.n_cells
    S = np.full(n, model.rock_fluid.Swi) if Sw is None else np.array(Sw, dtype=float)
    nf = model.connectivity.a.size
    state = SimulationState(
        p=np.zeros(n), Sw=S.copy(), Sw_prev1=S.copy(), Sw_prev2=S.copy(), Sw_old=S.copy(),
        flux_t=np.zeros(nf), flux_w=np.zeros(nf), flux_out=np.zeros(model.outflow.cells.size),
        dt=dt)
    state.p = hydrostatic_pressure(model)
    return state


def hydrostatic_pressure(model):
    """Non-wetting hydrostatic profile referenced to the outflow face."""
    g = np.asarray(model.gravity)
    bnd = model.outflow
    ref = model.centers[bnd.cells].mean(axis=0)
    return model.bc.p_out + model.fluid.rho_nw * (model.centers - ref) @ g


def _boundary_pressure(model):
    bnd = model.outflow
    g = np.asarray(model.gravity)
    xc = model.centers[bnd.cells]
    ref = xc.mean(axis=0)
    shift = np.zeros(3)
    shift[bnd.axis] = bnd.half_dist[0] * (1.0 if model.bc.outflow.endswith("max") else -1.0)
    xf = xc + shift
    return model.bc.p_out + model.fluid.rho_nw * (xf - ref - shift) @ g


def _upwind(sign_positive, a_vals, b_vals):
    return np.where(sign_positive, a_vals, b_vals)


# ---------------------------------------------------------------------------
# banded direct solves
#
# Renumbering cells with the shortest grid axis fastest makes every
# structured-grid operator banded with half-bandwidth equal to the
# product of the two shortest dimensions; LAPACK band solvers are then
# much cheaper than a general sparse LU.

MAX_BAND = 128


@lru_cache(maxsize=16)
def _band_layout(nx, ny, nz):
    dims = (nx, ny, nz)
    order = sorted(range(3), key=lambda d: dims[d])
    idx = np.arange(nx * ny * nz)
    ijk = (idx % nx, (idx // nx) % ny, idx // (nx * ny))
    pos = ijk[order[0]] + dims[order[0]] * (ijk[order[1]] + dims[order[1]] * ijk[order[2]])
    # band = offset of the slowest axis unless it is a single layer
    bw = dims[order[0]] if dims[order[2]] == 1 else dims[order[0]] * dims[order[1]]
    if dims[order[1]] == 1 and dims[order[2]] == 1:
        bw = 1
    return pos, bw


def _band_matrix(pos, bw, rows, cols, vals, n, upper_only=False):
    i, j = pos[rows], pos[cols]
    if upper_only:
        keep = i <= j
        i, j, vals = i[keep], j[keep], vals[keep]
        ab = np.zeros((bw + 1, n))
        np.add.at(ab, (bw + i - j, j), vals)
    else:
        ab = np.zeros((2 * bw + 1, n))
        np.add.at(ab, (bw + i - j, j), vals)
    return ab


def _solve_general(model, rows, cols, vals, rhs):
    n = model.n_cells
    pos, bw = _band_layout(model.nx, model.ny, model.nz)
    if bw > MAX_BAND:
        A = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
        return spla.spsolve(A, rhs)
    ab = _band_matrix(pos, bw, rows, cols, vals, n)
    xp = np.empty(n)
    xp[pos] = rhs
    return sla.solve_banded((bw, bw), ab, xp, check_finite=False)[pos]


def _spd_factor(model, A):
    """Callable applying an exact inverse of SPD ``A`` (banded Cholesky)."""
    n = model.n_cells
    pos, bw = _band_layout(model.nx, model.ny, model.nz)
    if bw > MAX_BAND:
        return spla.splu(sp.csc_matrix((A.data, A.indices, A.indptr), shape=(n, n))).solve
    ab = _band_matrix(pos, bw, A.row_of_entry, A.indices, A.data, n, upper_only=True)
    cb = sla.cholesky_banded(ab, lower=False, check_finite=False)

    def apply(v):
        vp = np.empty(n)
        vp[pos] = v
        return sla.cho_solve_banded((cb, False), vp, check_finite=False)[pos]
    return apply


# ---------------------------------------------------------------------------
# pressure

def assemble_pressure(model, state):
    """TPFA pressure matrix and right-hand side for the current saturation."""
    if model.outflow.cells.size == 0:
        raise ConfigurationError("no fixed-pressure boundary: pressure system is singular")
    con = model.connectivity
    fl = model.fluid
    rfp = model.rock_fluid
    lw, lnw = rf.phase_mobilities(state.Sw, rfp, fl)
    pc = rf.capillary_pressure(state.Sw, rfp)
    a, b, T = con.a, con.b, con.trans

    # face mobilities averaged: keeps the pressure operator smooth in S
    lw_f = 0.5 * (lw[a] + lw[b])
    lnw_f = 0.5 * (lnw[a] + lnw[b])
    lt_f = lw_f + lnw_f

    n = model.n_cells
    coef = T * lt_f
    explicit = T * (lnw_f * (pc[a] - pc[b]) + (lw_f * fl.rho_w + lnw_f * fl.rho_nw) * con.dgrav)

    bnd = model.outflow
    c = bnd.cells
    lt_b = lw[c] + lnw[c]
    coef_b = bnd.trans * lt_b
    grav_b = bnd.trans * (lw[c] * fl.rho_w + lnw[c] * fl.rho_nw) * bnd.dgrav
    p_b = _boundary_pressure(model)

    rows = np.concatenate([a, b, a, b, c])
    cols = np.concatenate([a, b, b, a, c])
    vals = np.concatenate([coef, coef, -coef, -coef, coef_b])
    A = from_triplets(n, rows, cols, vals)

    rhs = np.zeros(n)
    np.add.at(rhs, a, -explicit)
    np.add.at(rhs, b, explicit)
    np.add.at(rhs, c, coef_b * p_b - grav_b)
    inj = model.inflow
    np.add.at(rhs, inj.cells, model.bc.injection_flux * inj.area)
    return A, rhs


def solve_pressure(model, state, config=SolverConfig()):
    A, rhs = assemble_pressure(model, state)
    # shift by the boundary profile so an all-quiet system has zero rhs
    p0 = state.p
    r0 = rhs - (A @ p0)
    if np.linalg.norm(r0) <= config.cg_tol * max(np.linalg.norm(rhs), 1e-300):
        return p0.copy()
    dp = solve_cg(A, r0, tol=config.cg_tol * max(np.linalg.norm(rhs), 1e-300) / np.linalg.norm(r0),
                  precond=_spd_factor(model, A))
    return p0 + dp


def compute_velocities(model, state):
    """Darcy phase fluxes from the current pressure and saturation.

    Returns ``(flux_t, flux_w, flux_out)``; interior fluxes are oriented
    from ``connectivity.a`` to ``connectivity.b`` and divided by the face
    area give Darcy velocities.
    """
    con = model.connectivity
    fl = model.fluid
    rfp = model.rock_fluid
    lw, lnw = rf.phase_mobilities(state.Sw, rfp, fl)
    pc = rf.capillary_pressure(state.Sw, rfp)
    a, b, T = con.a, con.b, con.trans
    dphi_w = state.p[a] - state.p[b] + fl.rho_w * con.dgrav
    dphi_nw = dphi_w + pc[a] - pc[b] + (fl.rho_nw - fl.rho_w) * con.dgrav
    fw = T * 0.5 * (lw[a] + lw[b]) * dphi_w
    fnw = T * 0.5 * (lnw[a] + lnw[b]) * dphi_nw

    bnd = model.outflow
    c = bnd.cells
    p_b = _boundary_pressure(model)
    out = bnd.trans * ((lw[c] + lnw[c]) * (state.p[c] - p_b)
                       + (lw[c] * fl.rho_w + lnw[c] * fl.rho_nw) * bnd.dgrav)
    return fw + fnw, fw, out


# ---------------------------------------------------------------------------
# transport

def _mobility_product(lw, lnw, dlw, dlnw):
    lt = lw + lnw
    safe = np.where(lt > 0, lt, 1.0)
    M = np.where(lt > 0, lw * lnw / safe, 0.0)
    dM = np.where(lt > 0, (dlw * lnw + lw * dlnw) / safe - lw * lnw * (dlw + dlnw) / safe ** 2, 0.0)
    return M, dM


def wetting_fluxes(model, Sw, flux_t, flux_out, derivatives=False):
    """Wetting fluxes on interior faces and the outflow boundary.

    With ``derivatives`` also returns the partial derivatives of each
    interior flux with respect to the saturation in cells ``a`` and ``b``,
    and of each boundary flux with respect to its cell.
    """
    con = model.connectivity
    fl = model.fluid
    rfp = model.rock_fluid
    a, b, T = con.a, con.b, con.trans

    krw, krnw = rf.relperm(Sw, rfp)
    lw, lnw = krw / fl.mu_w, krnw / fl.mu_nw
    lt = lw + lnw
    fw = np.divide(lw, lt, out=np.zeros_like(lt), where=lt > 0)
    pc = rf.capillary_pressure(Sw, rfp)

    # viscous, upwinded by the total flux
    up_a = flux_t >= 0
    fw_up = _upwind(up_a, fw[a], fw[b])
    F = fw_up * flux_t

    # buoyancy, wetting from one side and non-wetting from the other
    G = (fl.rho_w - fl.rho_nw) * con.dgrav
    w_from_a = G >= 0
    lw_u = _upwind(w_from_a, lw[a], lw[b])
    lnw_u = _upwind(w_from_a, lnw[b], lnw[a])
    s = lw_u + lnw_u
    s_safe = np.where(s > 0, s, 1.0)
    Mg = np.where(s > 0, lw_u * lnw_u / s_safe, 0.0)
    F = F + T * Mg * G

    # capillary diffusion, arithmetic mean of the cell coefficients
    if derivatives:
        dkrw, dkrnw = rf.relperm_derivatives(Sw, rfp)
        dlw, dlnw = dkrw / fl.mu_w, dkrnw / fl.mu_nw
        M, dM = _mobility_product(lw, lnw, dlw, dlnw)
    else:
        M, _ = _mobility_product(lw, lnw, 0.0 * lw, 0.0 * lw)
    Mc = 0.5 * (M[a] + M[b])
    dpc = pc[a] - pc[b]
    F = F - T * Mc * dpc

    c = model.outflow.cells
    F_out = np.where(flux_out > 0, fw[c] * flux_out, 0.0)
    if not derivatives:
        return F, F_out

    dfw = np.divide(dlw * lnw - lw * dlnw, lt ** 2, out=np.zeros_like(lt), where=lt > 0)
    dF_da = np.where(up_a, dfw[a] * flux_t, 0.0)
    dF_db = np.where(up_a, 0.0, dfw[b] * flux_t)

    s2 = s_safe ** 2
    dMg_dw = np.where(s > 0, _upwind(w_from_a, dlw[a], dlw[b]) * lnw_u ** 2 / s2, 0.0)
    dMg_dnw = np.where(s > 0, _upwind(w_from_a, dlnw[b], dlnw[a]) * lw_u ** 2 / s2, 0.0)
    gterm_w = T * G * dMg_dw
    gterm_nw = T * G * dMg_dnw
    dF_da += np.where(w_from_a, gterm_w, gterm_nw)
    dF_db += np.where(w_from_a, gterm_nw, gterm_w)

    dpc_ds = rf.capillary_pressure_derivative(Sw, rfp)
    dF_da += -T * (0.5 * dM[a] * dpc + Mc * dpc_ds[a])
    dF_db += -T * (0.5 * dM[b] * dpc - Mc * dpc_ds[b])

    dFout = np.where(flux_out > 0, dfw[c] * flux_out, 0.0)
    return F, F_out, dF_da, dF_db, dFout


def transport_residual(model, state, Sw=None):
    """Cell-wise wetting mass imbalance rate [m^3/s] at saturation ``Sw``."""
    Sw = state.Sw if Sw is None else Sw
    con = model.connectivity
    F, F_out = wetting_fluxes(model, Sw, state.flux_t, state.flux_out)
    R = model.pore_volume / state.dt * (Sw - state.Sw_old)
    np.add.at(R, con.a, F)
    np.add.at(R, con.b, -F)
    np.add.at(R, model.outflow.cells, F_out)
    inj = model.inflow
    np.add.at(R, inj.cells, -model.bc.injection_flux * inj.area)
    return R


def residual_norm(model, state, Sw=None):
    """L2 norm of the transport imbalance relative to the injected volume."""
    R = transport_residual(model, state, Sw)
    return float(np.linalg.norm(R) / _mass_scale(model, state))


def _mass_scale(model, state):
    q = model.injection_rate
    if q > 0:
        return q
    return float(model.pore_volume.sum()) / state.dt


def transport_solve(model, state):
    """One linearized implicit-Euler transport solve about ``state.Sw``.

    Returns the unrelaxed candidate saturation.
    """
    con = model.connectivity
    n = model.n_cells
    Sk = state.Sw
    F, F_out, dF_da, dF_db, dFout = wetting_fluxes(model, Sk, state.flux_t, state.flux_out,
                                                   derivatives=True)
    R = model.pore_volume / state.dt * (Sk - state.Sw_old)
    np.add.at(R, con.a, F)
    np.add.at(R, con.b, -F)
    c = model.outflow.cells
    np.add.at(R, c, F_out)
    inj = model.inflow
    np.add.at(R, inj.cells, -model.bc.injection_flux * inj.area)

    a, b = con.a, con.b
    diag = model.pore_volume / state.dt
    diag = diag.copy()
    np.add.at(diag, a, dF_da)
    np.add.at(diag, b, -dF_db)
    np.add.at(diag, c, dFout)
    rows = np.concatenate([np.arange(n), a, b])
    cols = np.concatenate([np.arange(n), b, a])
    vals = np.concatenate([diag, dF_db, -dF_da])
    dS = _solve_general(model, rows, cols, vals, -R)
    if not np.all(np.isfinite(dS)):
        raise FloatingPointError("transport linear solve produced non-finite values")
    rfp = model.rock_fluid
    return np.clip(Sk + dS, rfp.Swi, 1.0 - rfp.Snwi)


def apply_relaxation(S_tilde, S_prev1, S_prev2, omega, beta=0.4):
    """Relaxed saturation update, clamped to [0, 1].

    ``S = w*S~ + (1-w)*S1 + (1-w)**(beta+1) * w * (S2 - S1)``
    """
    if omega == 1.0:
        return np.clip(S_tilde, 0.0, 1.0)
    S = (omega * S_tilde + (1.0 - omega) * S_prev1
         + (1.0 - omega) ** (beta + 1.0) * omega * (S_prev2 - S_prev1))
    return np.clip(S, 0.0, 1.0)


def inner_relaxation_update(residuals, omega_prev, config=SolverConfig()):
    """Aitken update of the relaxation factor from the last two residuals.

    ``residuals`` holds the fixed-point residuals ``S~^k - S^(k-1)`` of the
    inner iterations so far.
    """
    if len(residuals) < 2:
        return omega_prev
    r_prev, r_cur = residuals[-2], residuals[-1]
    diff = r_cur - r_prev
    denom = float(diff @ diff)
    if denom == 0.0:
        return omega_prev
    omega = -omega_prev * float(r_prev @ diff) / denom
    return float(np.clip(omega, config.omega_min, config.omega_max))


def update_phase_fluxes(model, state):
    state.flux_w, _ = wetting_fluxes(model, state.Sw, state.flux_t, state.flux_out)


def inner_loop(model, state, omega0, config=SolverConfig(), dynamic=True):
    """Relaxed saturation / velocity iteration at fixed pressure.

    Mutates ``state`` and returns ``(inner_count, last_residual, omegas)``
    where the residual is the infinity norm of the last unrelaxed update.
    """
    state.Sw_prev1 = state.Sw.copy()
    state.Sw_prev2 = state.Sw.copy()
    omega = float(omega0)
    residuals = []
    omegas = []
    dS = np.inf
    k = 0
    for k in range(1, config.max_inner + 1):
        S_tilde = transport_solve(model, state)
        r = S_tilde - state.Sw_prev1
        residuals.append(r)
        if dynamic and config.aitken:
            omega = inner_relaxation_update(residuals[-2:], omega, config)
        omegas.append(omega)
        dS = float(np.abs(r).max()) if r.size else 0.0
        if dS < config.outer_tol_dsat:
            # converged: keep the candidate itself, relaxation only shapes the path
            S_new = np.clip(S_tilde, 0.0, 1.0)
        else:
            S_new = apply_relaxation(S_tilde, state.Sw_prev1, state.Sw_prev2, omega, config.beta)
        state.Sw_prev2 = state.Sw_prev1
        state.Sw_prev1 = S_new
        state.Sw = S_new
        update_phase_fluxes(model, state)
        if dS < config.outer_tol_dsat:
            break
    return k, dS, omegas


def mass_balance_error(model, state):
    """Relative wetting-mass imbalance over the current time step."""
    R = transport_residual(model, state)
    return float(abs(R.sum()) / _mass_scale(model, state))


def check_convergence(state, state_prev_outer, model, config=SolverConfig()):
    """Return ``(converged, mass_error, dsat)`` for one outer iteration."""
    mass_err = mass_balance_error(model, state)
    prev = state_prev_outer.Sw if hasattr(state_prev_outer, "Sw") else state_prev_outer
    dsat = float(np.abs(state.Sw - prev).max()) if state.Sw.size else 0.0
    return outer_converged(mass_err, dsat, config), mass_err, dsat


def outer_converged(mass_err, dsat, config=SolverConfig()):
    return mass_err < config.outer_tol_mass and dsat < config.outer_tol_dsat


# ---------------------------------------------------------------------------
# records and reports

@dataclass
class IterationRecord:
    step: int
    outer: int
    omega0: float
    inner: int
    residual_before: float
    residual_after: float
    mass_error: float
    dsat: float
    converged: bool
    t: float
    dt: float
    model_update: bool = False
    update_index: int = -1
    update_rmse_before: float = float("nan")
    update_rmse_after: float = float("nan")

    FIELDS = ("step", "outer", "omega0", "inner", "residual_before", "residual_after",
              "mass_error", "dsat", "converged", "t", "dt", "model_update", "update_index",
              "update_rmse_before", "update_rmse_after")


@dataclass
class StepSummary:
    step: int
    t: float
    dt: float
    n_outer: int
    n_inner: int
    converged: bool


@dataclass
class Schedule:
    end_time: float
    dt0: float
    dt_max: float = np.inf
    grow_after: int = 5
    easy_outer: int = 3
    growth: float = 1.25
    max_halvings: int = 8

    @classmethod
    def from_pvi(cls, model, pvi, n_steps, **kw):
        """Schedule injecting ``pvi`` pore volumes in ``n_steps`` equal steps."""
        end = pvi * float(model.pore_volume.sum()) / model.injection_rate
        kw.setdefault("dt_max", end / n_steps)
        return cls(end_time=end, dt0=end / n_steps, **kw)


@dataclass
class SimulationReport:
    case: str
    strategy: str
    records: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    wall_time: float = 0.0
    final_p: np.ndarray = None
    final_Sw: np.ndarray = None
    failed: str = ""

    @property
    def total_outer(self):
        return sum(s.n_outer for s in self.steps)

    @property
    def total_inner(self):
        return sum(s.n_inner for s in self.steps)

    @property
    def total_metric(self):
        return total_iteration_metric(self.records)

    def cumulative_curve(self):
        """Cumulative total-iteration metric after every outer iteration."""
        inc = np.array([1.0 + r.inner / 3.0 for r in self.records])
        return np.cumsum(inc)

    def to_dict(self):
        return {
            "case": self.case,
            "strategy": self.strategy,
            "failed": self.failed,
            "wall_time": self.wall_time,
            "total_outer": self.total_outer,
            "total_inner": self.total_inner,
            "total_metric": self.total_metric,
            "steps": [asdict(s) for s in self.steps],
            "final_Sw": None if self.final_Sw is None else self.final_Sw.tolist(),
            "final_p": None if self.final_p is None else self.final_p.tolist(),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def write_records_csv(self, path):
        write_records_csv(self.records, path)


def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IterationRecord.FIELDS)
        for r in records:
            w.writerow([getattr(r, f) for f in IterationRecord.FIELDS])


def total_iteration_metric(records):
    """Outer iterations plus one third of the inner iterations."""
    return len(records) + sum(r.inner for r in records) / 3.0


# ---------------------------------------------------------------------------
# driver

def advance_timestep(model, state, controller, config=SolverConfig(), step=0):
    """Attempt one time step. Returns ``(converged, records)``.

    On success ``state`` holds the new time level; on failure the
    saturation is rolled back to the start of the step and ``t`` is kept.
    """
    state.Sw_old = state.Sw.copy()
    prev_outer = state.Sw.copy()
    records = []
    converged = False
    dynamic = getattr(controller, "dynamic_inner", True)
    for outer in range(1, config.max_outer + 1):
        state.p = solve_pressure(model, state, config)
        state.flux_t, state.flux_w, state.flux_out = compute_velocities(model, state)
        state.residual_old = state.residual
        state.residual = residual_norm(model, state)
        fv = feat.extract(model, state, state.residual, state.residual_old, state.inner_prev)
        omega0 = float(controller.select_omega(fv))
        res_before = state.residual
        n_inner, _, _ = inner_loop(model, state, omega0, config, dynamic=dynamic)
        converged, mass_err, dsat = check_convergence(state, prev_outer, model, config)
        updated = bool(controller.report_outcome(fv, omega0, n_inner))
        rec = IterationRecord(
            step=step, outer=outer, omega0=omega0, inner=n_inner,
            residual_before=res_before, residual_after=residual_norm(model, state),
            mass_error=mass_err, dsat=dsat, converged=converged,
            t=state.t, dt=state.dt, model_update=updated)
        events = getattr(controller, "events", None)
        if updated and events:
            ev = events[-1]
            rec.update_index = ev.index
            rec.update_rmse_before = ev.rmse_before
            rec.update_rmse_after = ev.rmse_after
        records.append(rec)
        state.inner_prev = n_inner
        if converged:
            break
        prev_outer = state.Sw.copy()
    if converged:
        state.t += state.dt
    else:
        state.Sw = state.Sw_old.copy()
        state.Sw_prev1 = state.Sw.copy()
        state.Sw_prev2 = state.Sw.copy()
    return converged, records


def run_simulation(model, controller, schedule, config=SolverConfig(), strategy="", state=None,
                   on_step=None):
    """March ``model`` to ``schedule.end_time`` and collect every record."""
    report = SimulationReport(case=model.name, strategy=strategy or getattr(controller, "name", ""))
    state = initial_state(model, dt=schedule.dt0) if state is None else state
    dt = schedule.dt0
    easy = 0
    step = 0
    halvings = 0
    t0 = time.perf_counter()
    eps = 1e-9 * max(schedule.end_time, 1.0)
    while state.t < schedule.end_time - eps:
        state.dt = min(dt, schedule.end_time - state.t)
        converged, recs = advance_timestep(model, state, controller, config, step=step)
        report.records.extend(recs)
        report.steps.append(StepSummary(step, state.t, state.dt, len(recs),
                                        sum(r.inner for r in recs), converged))
        if on_step is not None:
            on_step(state, recs)
        if not converged:
            halvings += 1
            if halvings > schedule.max_halvings:
                report.failed = f"step {step} at t={state.t:.6g} did not converge"
                break
            dt = 0.5 * dt
            easy = 0
        else:
            halvings = 0
            easy = easy + 1 if len(recs) <= schedule.easy_outer else 0
            if easy >= schedule.grow_after:
                dt = min(dt * schedule.growth, schedule.dt_max)
                easy = 0
        step += 1
    report.wall_time = time.perf_counter() - t0
    report.final_p = state.p.copy()
    report.final_Sw = state.Sw.copy()
    return report
