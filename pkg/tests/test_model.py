import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from grazing.errors import InvalidParameters
from grazing.model import (OscParams, ParamPoint, State, a_graz, osc_field, osc_flow, phi_p, reset,
                           wrap_phase, z_graz)

P = OscParams(0.02, 0.9, 0.28, 0.854)


# -- osc_field ------------------------------------------------------------------------

def test_field_unforced_equilibrium():
    assert osc_field(State(-1.0, 0.0, 1.234), OscParams(0.02, 0.9, 0.0, 0.854))[1] == 0.0


def test_field_direct_substitution():
    dx, dy, dz = osc_field(State(0.0, 0.0, 0.0), OscParams(0.02, 0.9, 0.3, 0.854))
    assert (dx, dz) == (0.0, 0.854)
    assert dy == pytest.approx(-0.7, abs=1e-15)


@pytest.mark.parametrize("omega", [0.5, 0.854, 1.3])
def test_field_at_grazing_is_minus_omega_squared(omega):
    p = OscParams(0.02, 0.9, a_graz(omega, 0.02), omega)
    _, dy, _ = osc_field(State(0.0, 0.0, z_graz(omega, 0.02)), p)
    assert dy == pytest.approx(-omega ** 2, rel=1e-12)


# -- osc_flow -------------------------------------------------------------------------

def test_flow_identity_at_zero_time():
    assert osc_flow(-0.3, 0.2, 1.7, 1.7, P) == pytest.approx((-0.3, 0.2), abs=1e-15)


def test_flow_converges_to_particular_solution():
    t = 200 * P.period
    x, y = osc_flow(-1.5, 0.7, 0.0, t, P)
    assert abs(x - phi_p(t, P)[0]) < 1e-8


def test_flow_matches_numerical_integration():
    def rhs(t, u):
        return [u[1], -2 * P.zeta * u[1] - u[0] - 1 + P.amp * math.cos(P.omega * t)]

    t1 = P.period
    sol = solve_ivp(rhs, (0.3, 0.3 + t1), [-0.4, 0.1], method="DOP853", rtol=1e-13, atol=1e-14)
    x, y = osc_flow(-0.4, 0.1, 0.3, 0.3 + t1, P)
    assert abs(x - sol.y[0, -1]) < 1e-9 and abs(y - sol.y[1, -1]) < 1e-9


@settings(max_examples=60, deadline=None)
@given(x0=st.floats(-2, 0), y0=st.floats(-1, 1), t0=st.floats(0, 10),
       d1=st.floats(-15, 15), d2=st.floats(-15, 15))
def test_flow_semigroup(x0, y0, t0, d1, d2):
    x1, y1 = osc_flow(x0, y0, t0, t0 + d1, P)
    x2, y2 = osc_flow(x1, y1, t0 + d1, t0 + d1 + d2, P)
    xd, yd = osc_flow(x0, y0, t0, t0 + d1 + d2, P)
    scale = 1.0 + max(abs(xd), abs(yd))
    assert abs(x2 - xd) < 1e-12 * scale * 10 and abs(y2 - yd) < 1e-12 * scale * 10


@settings(max_examples=40, deadline=None)
@given(x0=st.floats(-2, 0), y0=st.floats(-1, 1), t=st.floats(0, 20))
def test_field_is_time_derivative_of_flow(x0, y0, t):
    h = 1e-5
    xp, yp = osc_flow(x0, y0, 0.0, t + h, P)
    xm, ym = osc_flow(x0, y0, 0.0, t - h, P)
    x, y = osc_flow(x0, y0, 0.0, t, P)
    dx, dy, _ = osc_field(State(x, y, P.omega * t), P)
    assert abs((xp - xm) / (2 * h) - dx) < 1e-6
    assert abs((yp - ym) / (2 * h) - dy) < 1e-6


# -- a_graz / z_graz ------------------------------------------------------------------

def test_a_graz_at_unit_frequency():
    assert a_graz(1.0, 0.02) == pytest.approx(0.04, abs=1e-16)


def test_a_graz_reference_value():
    assert abs(a_graz(0.854, 0.02) - 0.2728) < 1e-4


def test_a_graz_extended_precision():
    getcontext().prec = 50
    w, z = Decimal("0.5"), Decimal("0.02")
    ref = ((1 - w * w) ** 2 + 4 * z * z * w * w).sqrt()
    assert a_graz(0.5, 0.02) == pytest.approx(float(ref), rel=1e-15)


@pytest.mark.parametrize("omega", [0.3, 0.854, 1.0, 2.0])
def test_z_graz_unit_circle_and_range(omega):
    z = z_graz(omega, 0.02)
    assert 0.0 <= z < 2 * math.pi
    assert math.sin(z) ** 2 + math.cos(z) ** 2 == pytest.approx(1.0, abs=1e-15)


def test_z_graz_unit_frequency():
    assert z_graz(1.0, 0.02) == pytest.approx(math.pi / 2, abs=1e-15)


@pytest.mark.parametrize("omega", [0.5, 0.854])
def test_z_graz_is_where_the_particular_solution_peaks_at_zero(omega):
    p = OscParams(0.02, 0.9, a_graz(omega, 0.02), omega)
    ts = np.linspace(0, p.period, 20001)
    i = int(np.argmax(phi_p(ts, p)[0]))
    res = minimize_scalar(lambda t: -phi_p(t, p)[0], bracket=(ts[i - 1], ts[i], ts[i + 1]),
                          tol=1e-12)
    assert abs(-res.fun) < 1e-10
    assert abs(wrap_phase(omega * res.x) - z_graz(omega, 0.02)) < 1e-5


# -- reset ----------------------------------------------------------------------------

def test_reset_identity_on_tangency(osc):
    assert reset(0.0, 1.3, osc, ParamPoint()) == (0.0, 1.3)


def test_reset_oscillator(osc):
    y, z = reset(1.0, 2.0, osc, ParamPoint())
    assert y == pytest.approx(-0.9, abs=1e-15) and z == 2.0


def test_reset_generic_hand_value(generic):
    y, z = reset(0.2, 1.0, generic, ParamPoint())
    assert y == pytest.approx(-0.164, abs=1e-15) and z == pytest.approx(1.01, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(y=st.floats(1e-9, 5), z=st.floats(0, 2 * math.pi))
def test_reset_turns_incoming_into_outgoing(osc, generic, y, z):
    for sys in (osc, generic):
        y_new, z_new = reset(y, z, sys, ParamPoint())
        assert y_new < 0 and 0.0 <= z_new < 2 * math.pi


# -- parameters -----------------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(zeta=0.0), dict(zeta=1.0), dict(epsilon=0.0),
                                 dict(epsilon=1.1), dict(omega=0.0), dict(amp=-0.1)])
def test_invalid_parameters(bad):
    kw = dict(zeta=0.02, epsilon=0.9, amp=0.3, omega=0.854) | bad
    with pytest.raises(InvalidParameters):
        OscParams(**kw)


@settings(max_examples=100, deadline=None)
@given(z=st.floats(-1e4, 1e4))
def test_wrap_phase_range(z):
    w = wrap_phase(z)
    assert 0.0 <= w < 2 * math.pi
    assert math.isclose(math.cos(w), math.cos(z), abs_tol=1e-9)


def test_unfolding_coordinates_round_trip(osc):
    pp = osc.param_point(0.3, 0.8)
    assert osc.physical(pp) == pytest.approx((0.3, 0.8), abs=1e-15)
    assert osc.param_point(a_graz(0.8, 0.02), 0.8).mu == pytest.approx(0.0, abs=1e-15)
