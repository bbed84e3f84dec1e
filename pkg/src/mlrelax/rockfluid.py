"""Brooks-Corey relative permeability and capillary pressure.

All functions accept scalars or numpy arrays of wetting saturation.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PC_SE_FLOOR = 1e-3


@dataclass(frozen=True)
class BrooksCoreyParams:
    krw_end: float = 1.0
    krnw_end: float = 1.0
    n_exp: float = 2.0
    Swi: float = 0.2
    Snwi: float = 0.3
    pe: float = 1000.0
    a_cap: float = 1.0

    def __post_init__(self):
        if self.Swi < 0 or self.Snwi < 0 or self.Swi + self.Snwi >= 1:
            raise ValueError("immobile fractions must be >= 0 and sum below 1")
        if not (0 < self.krw_end <= 1 and 0 < self.krnw_end <= 1):
            raise ValueError("relperm endpoints must lie in (0, 1]")
        if self.n_exp <= 0 or self.a_cap <= 0:
            raise ValueError("exponents must be positive")
        if self.pe < 0:
            raise ValueError("entry pressure must be non-negative")


# Table values for the reference cases.
CASES_1_2 = BrooksCoreyParams(1.0, 1.0, 2.0, 0.2, 0.3, 1000.0, 1.0)
CASE_3 = BrooksCoreyParams(0.3, 0.8, 2.0, 0.2, 0.2, 100.0, 1.0)
CASE_4 = BrooksCoreyParams(0.3, 0.8, 2.0, 0.2, 0.2, 10000.0, 1.0)


def effective_saturation(Sw, params):
    Sw = np.asarray(Sw, dtype=float)
    Se = (Sw - params.Swi) / (1.0 - params.Swi - params.Snwi)
    # exact endpoints despite rounding in the subtraction
    return np.where(Sw >= 1.0 - params.Snwi, 1.0, np.clip(Se, 0.0, 1.0))


def relperm(Sw, params):
    """Return ``(krw, krnw)``."""
    Se = effective_saturation(Sw, params)
    return params.krw_end * Se ** params.n_exp, params.krnw_end * (1.0 - Se) ** params.n_exp


def relperm_derivatives(Sw, params):
    """d(krw)/dSw and d(krnw)/dSw; zero where the saturation is clamped."""
    Sw = np.asarray(Sw, dtype=float)
    span = 1.0 - params.Swi - params.Snwi
    Se = effective_saturation(Sw, params)
    inside = (Sw > params.Swi) & (Sw < 1.0 - params.Snwi)
    n = params.n_exp
    dkrw = np.where(inside, params.krw_end * n * Se ** (n - 1) / span, 0.0)
    dkrnw = np.where(inside, -params.krnw_end * n * (1.0 - Se) ** (n - 1) / span, 0.0)
    return dkrw, dkrnw


def capillary_pressure(Sw, params):
    if params.pe == 0:
        return np.zeros_like(np.asarray(Sw, dtype=float))
    Se = np.maximum(effective_saturation(Sw, params), PC_SE_FLOOR)
    return params.pe * Se ** (-params.a_cap)


def capillary_pressure_derivative(Sw, params):
    Sw = np.asarray(Sw, dtype=float)
    if params.pe == 0:
        return np.zeros_like(Sw)
    span = 1.0 - params.Swi - params.Snwi
    Se = effective_saturation(Sw, params)
    active = (Se > PC_SE_FLOOR) & (Sw < 1.0 - params.Snwi)
    Se_safe = np.maximum(Se, PC_SE_FLOOR)
    return np.where(active, -params.a_cap * params.pe * Se_safe ** (-params.a_cap - 1) / span, 0.0)


def phase_mobilities(Sw, params, fluid):
    krw, krnw = relperm(Sw, params)
    return krw / fluid.mu_w, krnw / fluid.mu_nw


def total_mobility(Sw, params, fluid):
    lw, lnw = phase_mobilities(Sw, params, fluid)
    return lw + lnw


def fractional_flow(Sw, params, fluid):
    lw, lnw = phase_mobilities(Sw, params, fluid)
    lt = lw + lnw
    return np.divide(lw, lt, out=np.zeros_like(lt), where=lt > 0)


def _fw_sweep(params, fluid, n_points):
    S = np.linspace(params.Swi, 1.0 - params.Snwi, n_points)
    return S, fractional_flow(S, params, fluid)


def max_fw_slope(params, fluid, n_points=1001):
    """Largest centered-difference slope of fw over the mobile saturation range."""
    return _max_fw_slope_cached(params, fluid, n_points)


@lru_cache(maxsize=256)
def _max_fw_slope_cached(params, fluid, n_points):
    S, fw = _fw_sweep(params, fluid, n_points)
    slope = (fw[2:] - fw[:-2]) / (S[2:] - S[:-2])
    return float(slope.max())


def welge_tangent(params, fluid, n_points=1001):
    """Shock-front saturation and speed ``(S_front, dfw/dS at the front)``.

    The front saturation maximizes the chord slope ``fw(S) / (S - Swi)``
    drawn from the initial (immobile) state.
    """
    return _welge_cached(params, fluid, n_points)


@lru_cache(maxsize=256)
def _welge_cached(params, fluid, n_points):
    S, fw = _fw_sweep(params, fluid, n_points)
    chord = fw[1:] / (S[1:] - params.Swi)
    i = int(np.argmax(chord))
    return float(S[i + 1]), float(chord[i])
