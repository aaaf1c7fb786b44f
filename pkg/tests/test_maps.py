import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import fsolve

from grazing.continuation import as_black_box
from grazing.errors import ExtensionExceeded, InverseNotFound, NoSectionCrossing
from grazing.maps import (ImpactPoint, SectionPoint, flow_to_section, jacobian, locate_grazing,
                          numeric_first_derivs, numeric_second_derivs, p_disc, p_global,
                          p_global_iter, p_virt, p_virt_inverse, vivid, vivid_eval)
from grazing.model import HybridSystem, ImpactOscillator, ParamPoint, a_graz
from grazing.theory import (osc_a_matrix, osc_b_vector, osc_xi, resonance_frequency,
                            resonant_coeffs_osc, s_seq, spectral)

from conftest import OMEGA, ZETA, make_generic

PP0 = ParamPoint()


@pytest.fixture(scope="module")
def graz(osc):
    return locate_grazing(osc)


@pytest.fixture(scope="module")
def derivs(osc, graz):
    return numeric_first_derivs(osc, graz)


# -- flow_to_section / p_global ------------------------------------------------------

def test_grazing_orbit_returns_to_itself(osc, graz):
    out, elapsed = flow_to_section(0.0, 0.0, graz.z_graz, osc, PP0)
    assert elapsed == pytest.approx(2 * math.pi / OMEGA, abs=1e-9)
    assert abs(out.x) < 1e-9
    assert abs(math.remainder(out.z - graz.z_graz, 2 * math.pi)) < 1e-9


def test_period_of_non_impacting_orbit(osc, graz):
    amp = 0.25
    pp = osc.param_point(amp, OMEGA)
    x_star = -1.0 + amp / a_graz(OMEGA, ZETA)  # peak of the periodic particular solution
    _, elapsed = flow_to_section(x_star, 0.0, graz.z_graz, osc, pp)
    assert elapsed == pytest.approx(2 * math.pi / OMEGA, abs=1e-6)


def test_forward_then_backward_is_identity(osc):
    sp = SectionPoint(-0.02, 0.3)
    fwd, _ = flow_to_section(sp.x, 0.0, sp.z, osc, PP0)
    back, _ = flow_to_section(fwd.x, 0.0, fwd.z, osc, PP0, direction=-1)
    assert back.x == pytest.approx(sp.x, abs=1e-9)
    assert math.remainder(back.z - sp.z, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)


def test_p_global_fixes_grazing_point(osc, graz):
    out = p_global(graz.section_point, osc, PP0)
    assert abs(out.x) < 1e-9 and abs(out.z - graz.z_graz) < 1e-9


def test_jacobian_matches_closed_form(derivs):
    a_ref = osc_a_matrix(OMEGA, ZETA)
    np.testing.assert_allclose(derivs.a_mat, a_ref, rtol=1e-6)
    np.testing.assert_allclose(derivs.b_vec, osc_b_vector(OMEGA, ZETA), rtol=1e-6)


def test_trace_and_determinant_to_four_figures(derivs):
    assert f"{derivs.trace:.4g}" == "0.8248"
    assert f"{derivs.det:.4g}" == "0.7451"


def test_stencil_halving(osc, graz, derivs):
    from dataclasses import replace
    from grazing.maps import DEFAULT_CONFIG
    half = numeric_first_derivs(osc, graz, replace(DEFAULT_CONFIG, fd_step=0.5e-6))
    assert np.max(np.abs(half.a_mat - derivs.a_mat)) < 1e-7
    assert np.max(np.abs(half.b_vec - derivs.b_vec)) < 1e-7


def test_fixed_point_drift(osc, graz, derivs):
    a, b = derivs.a_mat, derivs.b_vec
    beta = (1 - a[1, 1]) * b[0] + a[0, 1] * b[1]
    want = beta / (np.linalg.det(a) - np.trace(a) + 1)

    def fixed_x(mu):
        def f(u):
            out = p_global(SectionPoint(u[0], u[1]), osc, ParamPoint(mu, 0.0))
            return [out.x - u[0], out.z - u[1]]
        return fsolve(f, [0.0, graz.z_graz], xtol=1e-13)[0]

    mus = np.linspace(-1e-3, 1e-3, 5)
    slope = np.polyfit(mus, [fixed_x(m) for m in mus], 1)[0]
    assert slope == pytest.approx(want, rel=1e-4)


def test_iterate_one_is_p_global(osc):
    sp = SectionPoint(-0.01, 0.2)
    last, inner = p_global_iter(1, sp, osc, PP0)
    assert inner == [] and last == p_global(sp, osc, PP0)


@pytest.mark.parametrize("p", [2, 3])
def test_iterate_derivatives_follow_the_s_recurrence(osc, graz, derivs, p):
    a, b = derivs.a_mat, derivs.b_vec
    sd = spectral(a)
    sp_, tp = s_seq(p, sd)
    sp1, _ = s_seq(p + 1, sd)
    ap = sp1 * np.eye(2) + sp_ * np.array([[-a[1, 1], a[0, 1]], [a[1, 0], -a[0, 0]]])
    beta = (1 - a[1, 1]) * b[0] + a[0, 1] * b[1]
    bp = sp_ * b + tp * np.array([beta, a[1, 0] * b[0] + (1 - a[0, 0]) * b[1]])

    def f(u):
        out, _ = p_global_iter(p, SectionPoint(u[0], u[1]), osc, ParamPoint(u[2], 0.0))
        return np.array([out.x, out.z])

    jac = jacobian(f, [0.0, graz.z_graz, 0.0], 1e-6)
    np.testing.assert_allclose(jac[:, :2], ap, rtol=1e-5)
    np.testing.assert_allclose(jac[:, 2], bp, rtol=1e-5)


def test_integrated_path_agrees_with_closed_form(osc):
    box = as_black_box(osc)
    sp = SectionPoint(-0.03, 0.4)
    a = p_global(sp, osc, PP0)
    b = p_global(sp, box, PP0)
    assert abs(a.x - b.x) < 1e-8 and abs(a.z - b.z) < 1e-8


def test_no_section_crossing_for_a_system_without_maxima():
    sys = HybridSystem(lambda x, y, z, mu, eta: 1.0, lambda *a: 0.9, lambda *a: 0.0,
                       lambda mu, eta: 1.0)
    with pytest.raises(NoSectionCrossing):
        flow_to_section(-1.0, 0.1, 0.0, sys, PP0)


def test_extension_limit_is_enforced():
    sys = make_generic()
    tight = HybridSystem(sys.field, sys.phi, sys.psi, sys.omega_of, extension_halfwidth=0.5)
    with pytest.raises(ExtensionExceeded):
        flow_to_section(-0.2, 0.0, 0.3, tight, PP0)


def test_maps_are_deterministic(osc):
    ip = ImpactPoint(0.01, 0.2)
    assert vivid(ip, 2, osc, PP0) == vivid(ip, 2, osc, PP0)


# -- P_virt / P_disc -----------------------------------------------------------------

def test_p_virt_identity_on_tangency(osc):
    assert p_virt(ImpactPoint(0.0, 0.7), osc, PP0) == SectionPoint(0.0, 0.7)


def test_p_virt_leading_order(osc, graz):
    y = 1e-3
    gamma = OMEGA ** 2
    out = p_virt(ImpactPoint(y, graz.z_graz), osc, PP0)
    assert out.x == pytest.approx(y * y / (2 * gamma), rel=1e-2)
    assert out.z - graz.z_graz == pytest.approx(OMEGA * y / gamma, rel=1e-2)


@settings(max_examples=25, deadline=None)
@given(y=st.floats(1e-6, 1e-2), dz=st.floats(-0.05, 0.05))
def test_p_virt_inverse_round_trip(osc, y, dz):
    z = 0.1 + dz
    ip = p_virt_inverse(p_virt(ImpactPoint(y, z), osc, PP0), osc, PP0)
    assert abs(ip.y_imp - y) < 1e-8 and abs(ip.z_imp - z) < 1e-8


def test_p_virt_inverse_rejects_points_below_the_wall(osc):
    with pytest.raises(InverseNotFound):
        p_virt_inverse(SectionPoint(-1e-4, 0.1), osc, PP0)


@pytest.mark.parametrize("y", [1e-3, 1e-4])
def test_p_virt_determinant_scales_with_impact_velocity(osc, graz, y):
    def f(u):
        out = p_virt(ImpactPoint(u[0], u[1]), osc, PP0)
        return [out.x, out.z]

    det = np.linalg.det(jacobian(f, [y, graz.z_graz], 1e-3 * y, scales=[1.0, 1.0]))
    assert det / y == pytest.approx(1 / OMEGA ** 2, rel=5 * y)


def test_p_disc_identity_on_tangency(osc):
    assert p_disc(SectionPoint(0.0, 0.3), osc, PP0) == SectionPoint(0.0, 0.3)


@pytest.mark.parametrize("xh", [1e-6, 1e-8])
def test_p_disc_square_root_law(osc, graz, xh):
    alpha, gamma = 1 + 0.9, OMEGA ** 2
    out = p_disc(SectionPoint(xh, graz.z_graz), osc, PP0)
    coef = (out.z - graz.z_graz) / math.sqrt(xh)
    assert coef == pytest.approx(-alpha * OMEGA * math.sqrt(2) / math.sqrt(gamma), rel=5e-2)
    assert out.x / xh == pytest.approx(0.81, rel=5e-2)


# -- VIVID ----------------------------------------------------------------------------

@pytest.mark.parametrize("p", [1, 2, 3])
def test_vivid_vanishes_at_grazing(osc, graz, p):
    v = vivid(ImpactPoint(0.0, graz.z_graz), p, osc, PP0)
    assert max(abs(v[0]), abs(v[1])) < 1e-8


@pytest.mark.parametrize("p", [1, 2, 3])
def test_vivid_determinants(osc, graz, derivs, p):
    a, b = derivs.a_mat, derivs.b_vec
    sd = spectral(a)
    sp_, _ = s_seq(p, sd)
    alpha, gamma = 1.9, OMEGA ** 2
    beta = (1 - a[1, 1]) * b[0] + a[0, 1] * b[1]
    l1, l2 = sd.lambda1, sd.lambda2
    det_k = ((1 - l1 ** p) * (1 - l2 ** p) * beta / ((1 - l1) * (1 - l2))).real

    jm = jacobian(lambda u: vivid(ImpactPoint(u[0], u[1]), p, osc, PP0), [0.0, graz.z_graz], 1e-6)
    km = jacobian(lambda u: vivid(ImpactPoint(0.0, u[0]), p, osc, ParamPoint(u[1], 0.0)),
                  [graz.z_graz, 0.0], 1e-6)
    assert np.linalg.det(jm) == pytest.approx(alpha * a[0, 1] * OMEGA * sp_ / gamma, rel=1e-4)
    assert np.linalg.det(km) == pytest.approx(det_k, rel=1e-4)


@pytest.mark.parametrize("sysname", ["osc", "generic"])
def test_analytic_vivid_jacobian_matches_differences(request, sysname):
    sys = request.getfixturevalue(sysname)
    pp = ParamPoint(2e-3, 0.0)
    ip = ImpactPoint(0.05, 0.15)
    ev = vivid_eval(ip, 2, sys, pp)
    fd = jacobian(lambda u: vivid(ImpactPoint(u[0], u[1]), 2, sys, pp), [ip.y_imp, ip.z_imp], 1e-6)
    np.testing.assert_allclose(ev.jac, fd, rtol=1e-5, atol=1e-7)


# -- second derivatives at resonances -------------------------------------------------

@pytest.mark.parametrize("p,n", [(1, 3), (2, 1)])
def test_xi_at_resonance(p, n):
    w = resonance_frequency(p, n, ZETA)
    sys = ImpactOscillator.create(ZETA, 0.9, w)
    sd2 = numeric_second_derivs(p, sys, locate_grazing(sys))
    e_p = math.exp(-2 * math.pi * p * ZETA / w)
    want = e_p * (e_p - (-1) ** n) if p == 1 else e_p * (e_p + 1)
    assert sd2.xi_p == pytest.approx(want, rel=1e-3)
    assert osc_xi(p, w, ZETA) == pytest.approx(want, rel=1e-12)


def test_f_p_at_resonance():
    p = 2
    cs = resonant_coeffs_osc(p, 1, ZETA, 0.9)
    sys = ImpactOscillator.create(ZETA, 0.9, cs.omega)
    sd2 = numeric_second_derivs(p, sys, locate_grazing(sys))
    want = cs.a12 * p * cs.delta ** (p / 2 - 1) * cs.kappa_p_prime / (2 * math.sin(math.pi / p) ** 2)
    assert sd2.f_p == pytest.approx(want, rel=1e-3)
