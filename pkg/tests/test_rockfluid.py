import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlrelax import rockfluid as rf
from mlrelax.model import FluidProps

P = rf.CASES_1_2
FL = FluidProps()


def test_effective_saturation_examples():
    assert rf.effective_saturation(P.Swi, P) == 0.0
    assert rf.effective_saturation(1 - P.Snwi, P) == 1.0
    assert rf.effective_saturation(0.5, P) == pytest.approx(0.6)


def test_relperm_examples():
    krw, krnw = rf.relperm(P.Swi, P)
    assert (krw, krnw) == (0.0, P.krnw_end)
    assert rf.relperm(0.7, P)[0] == pytest.approx(1.0)
    sw_half = P.Swi + 0.5 * (1 - P.Swi - P.Snwi)
    krw, krnw = rf.relperm(sw_half, P)
    assert krw == pytest.approx(0.25) and krnw == pytest.approx(0.25)


def test_capillary_examples():
    assert rf.capillary_pressure(1 - P.Snwi, P) == pytest.approx(1000.0)
    sw_half = P.Swi + 0.5 * (1 - P.Swi - P.Snwi)
    assert rf.capillary_pressure(sw_half, P) == pytest.approx(2000.0)
    no_pc = rf.BrooksCoreyParams(pe=0.0)
    np.testing.assert_array_equal(rf.capillary_pressure(np.linspace(0, 1, 11), no_pc), 0.0)


def test_capillary_floor_keeps_finite():
    assert np.isfinite(rf.capillary_pressure(0.0, P))
    assert rf.capillary_pressure(0.0, P) == pytest.approx(P.pe / rf.PC_SE_FLOOR)


def test_total_mobility_examples():
    assert rf.total_mobility(P.Swi, P, FL) == pytest.approx(P.krnw_end / FL.mu_nw)
    unit = FluidProps(mu_w=1.0, mu_nw=1.0)
    sw_half = P.Swi + 0.5 * (1 - P.Swi - P.Snwi)
    assert rf.total_mobility(sw_half, P, unit) == pytest.approx(0.5)


def test_fractional_flow_endpoints_and_symmetry():
    assert rf.fractional_flow(P.Swi, P, FL) == 0.0
    assert rf.fractional_flow(1 - P.Snwi, P, FL) == pytest.approx(1.0)
    sym = rf.BrooksCoreyParams(Swi=0.2, Snwi=0.2)
    assert rf.fractional_flow(0.5, sym, FluidProps(mu_w=1e-3, mu_nw=1e-3)) == pytest.approx(0.5)


def test_monotonicity_sweep():
    s = np.linspace(0, 1, 2001)
    krw, krnw = rf.relperm(s, P)
    assert np.all(np.diff(krw) >= 0) and np.all(np.diff(krnw) <= 0)
    fw = rf.fractional_flow(s, P, FL)
    assert np.all(np.diff(fw) >= -1e-15) and fw.min() >= 0 and fw.max() <= 1
    assert np.all(np.diff(rf.capillary_pressure(s, P)) <= 0)


@pytest.mark.parametrize("params", [rf.CASES_1_2, rf.CASE_3, rf.CASE_4])
def test_max_slope_matches_fine_sweep(params):
    s = np.linspace(0, 1, 100_001)
    fw = rf.fractional_flow(s, params, FL)
    oracle = np.max(np.gradient(fw, s))
    assert rf.max_fw_slope(params, FL) == pytest.approx(oracle, rel=0.01)


def test_welge_tangent_oracle():
    s = np.linspace(P.Swi, 1 - P.Snwi, 100_001)[1:]
    fw = rf.fractional_flow(s, P, FL)
    chord = fw / (s - P.Swi)
    i = np.argmax(chord)
    s_front, slope = rf.welge_tangent(P, FL)
    assert s_front == pytest.approx(s[i], rel=0.01)
    assert slope == pytest.approx(chord[i], rel=0.01)


def test_relperm_derivatives_match_fd():
    s = np.linspace(0.25, 0.65, 9)
    h = 1e-7
    d = rf.relperm_derivatives(s, P)
    for k in range(2):
        fd = (rf.relperm(s + h, P)[k] - rf.relperm(s - h, P)[k]) / (2 * h)
        np.testing.assert_allclose(d[k], fd, rtol=1e-5, atol=1e-8)


@given(st.floats(0.0, 1.0))
def test_ranges_property(sw):
    krw, krnw = rf.relperm(sw, P)
    assert 0 <= krw <= P.krw_end and 0 <= krnw <= P.krnw_end
    assert 0 <= rf.fractional_flow(sw, P, FL) <= 1
    assert rf.total_mobility(sw, P, FL) >= 0
    assert rf.capillary_pressure(sw, P) >= P.pe


@pytest.mark.parametrize("kw", [dict(Swi=0.6, Snwi=0.5), dict(krw_end=0.0), dict(krnw_end=1.5),
                                dict(n_exp=0.0), dict(pe=-1.0), dict(Swi=-0.1)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        rf.BrooksCoreyParams(**kw)
