"""Closed-form versus numeric cross-checks, run by ``grazing verify``.

Each check returns a :class:`Check` row; ``run_checks`` collects them and
never raises, so one broken check cannot hide the others.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .continuation import (branch_from_grazing, continue_curve,
                           find_resonant_grazing, fit_quadratic, grazing_curve,
                           numeric_resonant_coeffs)
from .maps import (ImpactPoint, SectionPoint, jacobian, locate_grazing,
                   numeric_first_derivs, p_disc, vivid)
from .model import ImpactOscillator, ParamPoint, a_graz
from .theory import (H_p, g_p, h_p, osc_a_matrix, osc_b_vector,
                     resonance_frequency, resonant_coeffs_osc, s_seq, spectral, spectral_from,
                     u_profile, unfolding_constants)

ZETA, EPSILON, OMEGA_REF = 0.02, 0.9, 0.854
REFERENCE_COEFFS = {(1, 3): (-282.4, 12.15), (2, 1): (-244.5, 21.35), (3, 2): (-613.4, 249.1)}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def sig4(x) -> str:
    return f"{x:.4g}"


def _rel(a, b):
    return abs(a - b) / abs(b)


def check_grazing_amplitude():
    ag = a_graz(OMEGA_REF, ZETA)
    # the integrated path solves for mu = amp - a_graz(omega), so the oracle is mu = 0
    gen = grazing_curve(ImpactOscillator.create(ZETA, EPSILON, OMEGA_REF), [0.5, OMEGA_REF],
                        generic=True)
    err = max(abs(q.mu) for q in gen.points)
    ok = abs(ag - 0.2728) < 1e-4 and err < 1e-7
    return ok, f"a_graz = {ag:.6f}; generic path max error {err:.2e}"


def check_monodromy():
    sys = ImpactOscillator.create(ZETA, EPSILON, OMEGA_REF)
    graz = locate_grazing(sys)
    d = numeric_first_derivs(sys, graz)
    a_ref, b_ref = osc_a_matrix(OMEGA_REF, ZETA), osc_b_vector(OMEGA_REF, ZETA)
    ea = float(np.max(np.abs(d.a_mat - a_ref) / np.abs(a_ref)))
    eb = float(np.max(np.abs(d.b_vec - b_ref) / np.abs(b_ref)))
    ok = (sig4(d.trace), sig4(d.det)) == ("0.8248", "0.7451") and ea < 1e-6 and eb < 1e-6
    return ok, f"(tau, delta) = ({d.trace:.6f}, {d.det:.6f}); A rel err {ea:.1e}; b rel err {eb:.1e}"


def check_resonances():
    want = {(1, 3): 0.6665, (1, 4): 0.4999, (1, 5): 0.3999, (2, 1): 0.7998}
    got = {k: resonance_frequency(*k, ZETA) for k in want}
    ok = all(abs(got[k] - v) < 1e-4 for k, v in want.items())
    return ok, ", ".join(f"p={p} n={n}: {w:.5f}" for (p, n), w in got.items())


def check_closed_form_coeffs():
    rows, ok = [], True
    for (p, n), (sn, pd) in REFERENCE_COEFFS.items():
        cs = resonant_coeffs_osc(p, n, ZETA, EPSILON)
        ok &= sig4(cs.c_sn) == sig4(sn) and sig4(cs.c_pd) == sig4(pd)
        rows.append(f"p={p}: {cs.c_sn:.2f}/{cs.c_pd:.3f}")
    return ok, "; ".join(rows)


def check_general_vs_closed():
    rows, ok = [], True
    for p, n in REFERENCE_COEFFS:
        cs = resonant_coeffs_osc(p, n, ZETA, EPSILON)
        sys = ImpactOscillator.create(ZETA, EPSILON, cs.omega)
        cn = numeric_resonant_coeffs(p, sys)
        e = max(_rel(cn.c_sn, cs.c_sn), _rel(cn.c_pd, cs.c_pd))
        ok &= e < 1e-3
        rows.append(f"p={p}: {e:.1e}")
    return ok, "max rel err " + "; ".join(rows)


def check_curve_fits(resonances=tuple(REFERENCE_COEFFS)):
    rows, ok = [], True
    for p, n in resonances:
        rg = find_resonant_grazing(p, n, ImpactOscillator.create(ZETA, EPSILON, OMEGA_REF))
        fits = {}
        for kind, seed in (("SN", rg.sn_seed), ("PD", rg.pd_seed)):
            curve = continue_curve(kind, p, seed, rg.sys)
            c, _, _ = fit_quadratic(curve)
            pred = rg.coeffs.c_sn if kind == "SN" else rg.coeffs.c_pd
            fits[kind] = (c, curve)
            ok &= _rel(c, pred) < 0.05
        ok &= bool(np.all(fits["SN"][1].mu < 1e-12) and np.all(fits["PD"][1].mu > -1e-12))
        rows.append(f"p={p}: SN {fits['SN'][0]:.1f}, PD {fits['PD'][0]:.2f}")
    return ok, "; ".join(rows)


def check_discontinuity_map():
    sys = ImpactOscillator.create(ZETA, EPSILON, OMEGA_REF)
    graz = locate_grazing(sys)
    d = numeric_first_derivs(sys, graz)
    cs = unfolding_constants(2, sys, d, spectral(d.a_mat), graz)
    coef = -cs.alpha * cs.omega * math.sqrt(2.0) / math.sqrt(cs.gamma)
    rows, ok = [], True
    for xh in (1e-6, 1e-8):
        out = p_disc(SectionPoint(xh, graz.z_graz), sys, graz.pp)
        e_root = _rel((out.z - graz.z_graz) / math.sqrt(xh), coef)
        e_contr = _rel(out.x / xh, cs.phi ** 2)
        ok &= e_root < 0.05 and e_contr < 0.05
        rows.append(f"x={xh:g}: sqrt-coef err {e_root:.1e}, contraction err {e_contr:.1e}")
    return ok, "; ".join(rows)


def vivid_determinants(p, sys, graz, h=1e-6):
    """``(det J, det K)`` of the VIVID function at grazing by central differences."""
    zg, eta = graz.z_graz, graz.pp.eta

    def v_yz(u):
        return vivid(ImpactPoint(u[0], u[1]), p, sys, ParamPoint(graz.pp.mu, eta))

    def v_zmu(u):
        return vivid(ImpactPoint(0.0, u[0]), p, sys, ParamPoint(u[1], eta))

    jm = jacobian(v_yz, [0.0, zg], h)
    km = jacobian(v_zmu, [zg, graz.pp.mu], h)
    return float(np.linalg.det(jm)), float(np.linalg.det(km))


def check_determinants():
    sys = ImpactOscillator.create(ZETA, EPSILON, OMEGA_REF)
    graz = locate_grazing(sys)
    d = numeric_first_derivs(sys, graz)
    sd = spectral(d.a_mat)
    rows, ok = [], True
    for p in (1, 2, 3):
        cs = unfolding_constants(p, sys, d, sd, graz)
        sp, _ = s_seq(p, sd)
        l1, l2 = sd.lambda1, sd.lambda2
        want_j = cs.alpha * cs.a12 * cs.omega * sp / cs.gamma
        want_k = ((1 - l1 ** p) * (1 - l2 ** p) * cs.beta / ((1 - l1) * (1 - l2))).real
        dj, dk = vivid_determinants(p, sys, graz)
        e = max(_rel(dj, want_j), _rel(dk, want_k))
        ok &= e < 1e-4
        rows.append(f"p={p}: {e:.1e}")
    return ok, "max rel err " + "; ".join(rows)


def check_sequence_identities(n_grid=12, p_max=8):
    """Bracket of h_p, H_p identity, signs of S_p/T_p and u-profile negativity on a grid."""
    worst = 0.0
    ok = True
    for delta in np.linspace(0.05, 0.95, n_grid):
        for p in range(3, p_max + 1):
            h = h_p(p, delta)
            ok &= g_p(p / 2.0, delta) < h < g_p(p - 1, delta)
        for tau in np.linspace(-delta - 1 + 1e-3, delta + 1 - 1e-3, n_grid):
            sd = spectral_from(tau, delta)
            for p in range(2, p_max + 1):
                s_pm1, t_pm1 = s_seq(p - 1, sd) if p > 1 else (0.0, 0.0)
                s_p, t_p = s_seq(p, sd)
                lhs = s_pm1 * t_p - s_p * t_pm1
                worst = max(worst, abs(lhs - delta ** (p - 2) * H_p(tau, delta, p)))
                if tau >= g_p(p / 2.0, delta):
                    ok &= t_p > 0
                if p >= 3 and tau > h_p(p, delta) and abs(tau - g_p(p, delta)) > 1e-9:
                    ok &= np.sign(s_p) == np.sign(tau - g_p(p, delta))
        for p in range(2, p_max + 1):
            u = u_profile(p, spectral_from(delta + 1.0, delta))
            ok &= bool(np.all(u[1:p] < 0))
    ok &= worst < 1e-10
    return ok, f"H_p identity max error {worst:.1e}"


def check_branch_events():
    sys = ImpactOscillator.create(ZETA, EPSILON, OMEGA_REF)
    ag = a_graz(OMEGA_REF, ZETA)
    _, ev3 = branch_from_grazing(3, sys)
    _, ev2 = branch_from_grazing(2, sys)
    sn = [ag + e.params.mu for e in ev3 if e.kind == "SN"]
    gz = [ag + e.params.mu for e in ev3 if e.kind == "GZ"]
    pd = [ag + e.params.mu for e in ev2 if e.kind == "PD"]
    ok = len(sn) == len(gz) == len(pd) == 1 and sn[0] < ag < gz[0] < pd[0]
    return ok, f"SN3 {sn}, A_graz {ag:.5f}, GZ3 {gz}, PD2 {pd}"


FAST = [
    ("grazing amplitude", check_grazing_amplitude),
    ("monodromy data", check_monodromy),
    ("resonance frequencies", check_resonances),
    ("closed-form coefficients", check_closed_form_coeffs),
    ("numeric vs closed-form coefficients", check_general_vs_closed),
    ("curve tangency p=2", lambda: check_curve_fits(((2, 1),))),
    ("sequence identities", check_sequence_identities),
    ("discontinuity-map asymptotics", check_discontinuity_map),
    ("VIVID determinants", check_determinants),
]

FULL = FAST[:5] + [("curve tangency", check_curve_fits)] + FAST[6:] + [
    ("branch events at omega=0.854", check_branch_events),
]


def run_checks(fast=True, progress=None):
    rows = []
    for name, fn in (FAST if fast else FULL):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        row = Check(name, bool(ok), detail, time.perf_counter() - t0)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def format_row(row: Check) -> str:
    return f"{'PASS' if row.passed else 'FAIL'}  {row.name:<38s} {row.seconds:6.1f}s  {row.detail}"
