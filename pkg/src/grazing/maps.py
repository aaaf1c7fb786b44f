"""Poincare-type maps near a grazing orbit, and their finite-difference derivatives.

Coordinates:

* section points ``(x, z)`` live on ``y = 0`` with ``F < 0`` (maxima of ``x``);
* impact points ``(y_imp, z_imp)`` live on the wall ``x = 0``.

All phases handled here are unwrapped: each map returns a phase within pi
of the value one would expect near the grazing orbit, never reduced mod 2*pi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InverseNotFound, NoSectionCrossing, StencilOutOfDomain
from .flow import (IntegratorConfig, SectionWindow, Trajectory, section_crossing,
                   surface_crossing, unwrap_near)
from .model import TWO_PI, HybridSystem, ParamPoint, reset

log = logging.getLogger(__name__)

DEFAULT_CONFIG = IntegratorConfig()


@dataclass(frozen=True)
class SectionPoint:
    x: float
    z: float


@dataclass(frozen=True)
class ImpactPoint:
    y_imp: float
    z_imp: float


@dataclass(frozen=True)
class MapDerivs:
    a_mat: np.ndarray   # D P_global at grazing, rows (x', z'), columns (x, z)
    b_vec: np.ndarray   # d P_global / d mu at grazing

    @property
    def trace(self):
        return float(np.trace(self.a_mat))

    @property
    def det(self):
        return float(np.linalg.det(self.a_mat))


@dataclass(frozen=True)
class SecondDerivs:
    p: int
    xi_p: float     # d2 (P^p)_1 / dz2
    d_p: float      # d2 (P^p)_1 / dz dx
    e_p: float      # d2 (P^p)_1 / dz dmu
    f_p: float      # d2 (P^p)_1 / dz deta, following the grazing orbit as eta moves


@dataclass(frozen=True)
class GrazingPoint:
    """Location of the grazing orbit: ``(0, 0, z_graz)`` at parameters ``pp``."""

    pp: ParamPoint
    z_graz: float

    @property
    def section_point(self):
        return SectionPoint(0.0, self.z_graz)


def flow_to_section(x, y, z, sys: HybridSystem, pp: ParamPoint,
                    cfg: IntegratorConfig = DEFAULT_CONFIG, direction=1,
                    window: SectionWindow | None = None):
    """Follow the extended flow from ``(x, y, z)`` to the next section crossing.

    Returns ``(SectionPoint, elapsed)`` where ``elapsed`` is signed time.
    """
    traj = Trajectory(sys, pp, cfg, x, y, z, direction)
    c = section_crossing(traj, window)
    return SectionPoint(c.x, c.z), direction * c.s


def p_global(sp: SectionPoint, sys, pp, cfg=DEFAULT_CONFIG, window=None) -> SectionPoint:
    """Return map to the section, ignoring impacts.

    The phase is shifted back by the whole number of forcing periods elapsed,
    so a fixed point returns its own phase.
    """
    out, _ = flow_to_section(sp.x, 0.0, sp.z, sys, pp, cfg, 1, window)
    return SectionPoint(out.x, unwrap_near(out.z, sp.z))


def p_global_iter(p: int, sp: SectionPoint, sys, pp, cfg=DEFAULT_CONFIG, window=None):
    """``p``-fold iterate of :func:`p_global` and the ``p - 1`` interior points."""
    if p < 1:
        raise ValueError("p must be >= 1")
    points = []
    cur = sp
    for _ in range(p):
        cur = p_global(cur, sys, pp, cfg, window)
        points.append(cur)
    return points[-1], points[:-1]


def p_virt(ip: ImpactPoint, sys, pp, cfg=DEFAULT_CONFIG) -> SectionPoint:
    """Map a wall point to the section along the extended flow.

    Forward in time from ``y > 0``, backward from ``y < 0``; the identity
    ``(0, z)`` when ``y = 0``.
    """
    if ip.y_imp == 0.0:
        return SectionPoint(0.0, ip.z_imp)
    direction = 1 if ip.y_imp > 0 else -1
    out, _ = flow_to_section(0.0, ip.y_imp, ip.z_imp, sys, pp, cfg, direction)
    return out


def p_virt_inverse(sp: SectionPoint, sys, pp, cfg=DEFAULT_CONFIG) -> ImpactPoint:
    """Incoming-branch preimage of a section point with ``x >= 0`` under :func:`p_virt`.

    Solved by flowing backward from ``(x, 0, z)`` until ``x`` first reaches 0,
    which is a scalar root problem in time.
    """
    if sp.x == 0.0:
        return ImpactPoint(0.0, sp.z)
    if sp.x < 0.0:
        raise InverseNotFound(f"no wall preimage for a section point with x = {sp.x} < 0")
    traj = Trajectory(sys, pp, cfg, sp.x, 0.0, sp.z, -1)
    try:
        c = surface_crossing(traj, rising=False)
    except NoSectionCrossing as exc:
        raise InverseNotFound(str(exc)) from exc
    if not c.y > 0.0:
        raise InverseNotFound(f"preimage is not on the incoming set (y = {c.y})")
    return ImpactPoint(c.y, c.z)


def p_disc(sp: SectionPoint, sys, pp, cfg=DEFAULT_CONFIG) -> SectionPoint:
    """Discontinuity map ``P_virt o R o P_virt^{-1}`` for virtual points ``x > 0``."""
    ip = p_virt_inverse(sp, sys, pp, cfg)
    y_rec, z_rec = reset(ip.y_imp, ip.z_imp, sys, pp, wrap=False)
    return p_virt(ImpactPoint(y_rec, z_rec), sys, pp, cfg)


def vivid_orbit(ip: ImpactPoint, p: int, sys, pp, cfg=DEFAULT_CONFIG):
    """All section points of the candidate orbit through impact point ``ip``.

    Returns ``(crossings, hat)`` where ``crossings = [x0, ..., xp]`` starts at
    ``P_virt(R(ip))`` and ``hat = P_virt(ip)``.
    """
    y_rec, z_rec = reset(ip.y_imp, ip.z_imp, sys, pp, wrap=False)
    start = p_virt(ImpactPoint(y_rec, z_rec), sys, pp, cfg)
    last, inner = p_global_iter(p, start, sys, pp, cfg)
    hat = p_virt(ip, sys, pp, cfg)
    return [start, *inner, last], hat


def vivid(ip: ImpactPoint, p: int, sys, pp, cfg=DEFAULT_CONFIG):
    """VIVID function ``P_global^p(P_virt(R(y, z))) - P_virt(y, z)``.

    Zeros are ``p``-loop periodic orbits with one impact.  The second
    component is a phase difference in unwrapped phase.
    """
    crossings, hat = vivid_orbit(ip, p, sys, pp, cfg)
    last = crossings[-1]
    return last.x - hat.x, unwrap_near(last.z, hat.z) - hat.z


# -- finite differences ---------------------------------------------------------

def _step(h, scale):
    return h * max(1.0, abs(scale))


def jacobian(fun, u0, h, scales=None):
    """Central-difference Jacobian of a vector function ``fun(u)``."""
    u0 = np.asarray(u0, dtype=float)
    cols = []
    for k in range(len(u0)):
        hk = _step(h, u0[k] if scales is None else scales[k])
        up, dn = u0.copy(), u0.copy()
        up[k] += hk
        dn[k] -= hk
        cols.append((np.asarray(fun(up)) - np.asarray(fun(dn))) / (2.0 * hk))
    return np.column_stack(cols)


def locate_grazing(sys: HybridSystem, eta=0.0, cfg=DEFAULT_CONFIG, guess=None,
                   tol=1e-12, max_iter=30) -> GrazingPoint:
    """Find ``(mu, z)`` with ``P_global(0, z; mu, eta) = (0, z)``.

    The oscillator answer is closed-form; other systems are solved by Newton
    on the 2x2 fixed-point condition from ``guess = (mu, z)``.
    """
    if sys.closed_form:
        pp = ParamPoint(0.0, eta)
        return GrazingPoint(pp, sys.grazing_phase(pp))
    if guess is None:
        raise ValueError("generic systems need an initial (mu, z) guess")
    from .errors import FixedPointLost

    def resid(u):
        pp = ParamPoint(u[0], eta)
        out = p_global(SectionPoint(0.0, u[1]), sys, pp, cfg)
        return np.array([out.x, out.z - u[1]])

    u = np.array(guess, dtype=float)
    r = resid(u)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return GrazingPoint(ParamPoint(u[0], eta), u[1] % TWO_PI)
        jac = jacobian(resid, u, cfg.fd_step)
        u_new = u - np.linalg.solve(jac, r)
        r_new = resid(u_new)
        if np.max(np.abs(r_new)) >= np.max(np.abs(r)) and np.max(np.abs(r_new)) > 10 * tol:
            # stagnated at the noise floor of the integrator
            if np.max(np.abs(r)) < 1e3 * tol:
                break
        u, r = u_new, r_new
    if np.max(np.abs(r)) < 1e4 * tol:
        return GrazingPoint(ParamPoint(u[0], eta), u[1] % TWO_PI)
    raise FixedPointLost(f"grazing fixed point not found (residual {np.max(np.abs(r)):.3g})")


def _pglobal_vec(sys, cfg, graz: GrazingPoint, p=1):
    """``(x, z, mu, eta) -> P_global^p`` as a vector, phase relative to input."""
    def f(u):
        pp = ParamPoint(u[2], u[3])
        out, _ = p_global_iter(p, SectionPoint(u[0], u[1]), sys, pp, cfg)
        return np.array([out.x, out.z])
    return f


def _check_stencil(sys, x, h):
    if abs(x) + h > sys.extension_halfwidth:
        raise StencilOutOfDomain("finite-difference stencil leaves the extension region")


def numeric_first_derivs(sys, graz: GrazingPoint, cfg=DEFAULT_CONFIG) -> MapDerivs:
    """``A = D P_global`` and ``b = dP_global/dmu`` at the grazing point."""
    f = _pglobal_vec(sys, cfg, graz)
    u0 = np.array([0.0, graz.z_graz, graz.pp.mu, graz.pp.eta])
    _check_stencil(sys, 0.0, cfg.fd_step)
    jac = jacobian(lambda v: f(np.concatenate([v, u0[3:]])), u0[:3], cfg.fd_step)
    return MapDerivs(jac[:, :2], jac[:, 2])


def numeric_second_derivs(p: int, sys, graz: GrazingPoint, cfg=DEFAULT_CONFIG) -> SecondDerivs:
    """Second derivatives of the first component of ``P_global^p`` at grazing."""
    f = _pglobal_vec(sys, cfg, graz, p)
    u0 = np.array([0.0, graz.z_graz, graz.pp.mu, graz.pp.eta])
    h = cfg.fd_step2
    _check_stencil(sys, 0.0, h)

    def first(u):
        return f(u)[0]

    def mixed(k):
        hz = _step(h, u0[1])
        hk = _step(h, u0[k])
        vals = {}
        for a in (1, -1):
            for b in (1, -1):
                u = u0.copy()
                u[1] += a * hz
                u[k] += b * hk
                vals[a, b] = first(u)
        return (vals[1, 1] - vals[1, -1] - vals[-1, 1] + vals[-1, -1]) / (4.0 * hz * hk)

    hz = _step(h, u0[1])
    up, dn = u0.copy(), u0.copy()
    up[1] += hz
    dn[1] -= hz
    xi = (first(up) - 2.0 * first(u0) + first(dn)) / hz ** 2
    e_p = mixed(2)
    # the phase and amplitude of the grazing orbit drift with eta; measuring z and mu
    # from that orbit adds the chain-rule terms below to the fixed-coordinate derivative
    dz, dmu = _grazing_drift(sys, graz, cfg)
    f_p = mixed(3) + xi * dz + e_p * dmu
    return SecondDerivs(p, xi, mixed(0), e_p, f_p)


def _grazing_drift(sys, graz: GrazingPoint, cfg, h=1e-5):
    """``(d z_graz / d eta, d mu_graz / d eta)`` by central differences."""
    guess = (graz.pp.mu, graz.z_graz)
    hi = locate_grazing(sys, graz.pp.eta + h, cfg, guess=guess)
    lo = locate_grazing(sys, graz.pp.eta - h, cfg, guess=guess)
    dz = unwrap_near(hi.z_graz, graz.z_graz) - unwrap_near(lo.z_graz, graz.z_graz)
    return dz / (2.0 * h), (hi.pp.mu - lo.pp.mu) / (2.0 * h)


# -- exact derivatives via the propagator ------------------------------------------

def _section_map_jac(x, y, z, sys, pp, cfg, direction):
    traj = Trajectory(sys, pp, cfg, x, y, z, direction)
    c = section_crossing(traj)
    return SectionPoint(c.x, c.z), traj.section_jacobian(c)


def p_global_jac(sp: SectionPoint, sys, pp, cfg=DEFAULT_CONFIG):
    """:func:`p_global` and its 2x2 derivative in ``(x, z)``."""
    out, jac = _section_map_jac(sp.x, 0.0, sp.z, sys, pp, cfg, 1)
    return SectionPoint(out.x, unwrap_near(out.z, sp.z)), jac[:, [0, 2]]


def p_global_iter_jac(p: int, sp: SectionPoint, sys, pp, cfg=DEFAULT_CONFIG):
    """``p``-th iterate, interior points and the chained derivative."""
    cur, total, inner = sp, np.eye(2), []
    for _ in range(p):
        cur, jac = p_global_jac(cur, sys, pp, cfg)
        total = jac @ total
        inner.append(cur)
    return cur, inner[:-1], total


def p_virt_jac(ip: ImpactPoint, sys, pp, cfg=DEFAULT_CONFIG):
    """:func:`p_virt` and its 2x2 derivative in ``(y_imp, z_imp)``.

    At ``y_imp = 0`` the limit ``[[0, 0], [omega/gamma, 1]]`` is returned.
    """
    if ip.y_imp == 0.0:
        f = sys.accel(0.0, 0.0, ip.z_imp, pp)
        return SectionPoint(0.0, ip.z_imp), np.array([[0.0, 0.0], [-sys.omega(pp) / f, 1.0]])
    direction = 1 if ip.y_imp > 0 else -1
    out, jac = _section_map_jac(0.0, ip.y_imp, ip.z_imp, sys, pp, cfg, direction)
    return out, jac[:, [1, 2]]


def reset_jac(y, z, sys, pp, h=1e-6):
    """Derivative of the reset law in ``(y, z)`` by central differences of ``Phi, Psi``."""
    def r(v):
        return np.array(reset(v[0], v[1], sys, pp, wrap=False))
    return jacobian(r, np.array([y, z]), h)


@dataclass(frozen=True)
class VividEval:
    """VIVID value at an impact point together with the factors of its derivative."""

    impact: ImpactPoint
    value: np.ndarray          # (v1, v2)
    crossings: list            # [x0, ..., xp]
    hat: SectionPoint
    d_global: np.ndarray       # D P_global^p at x0
    d_virt_reset: np.ndarray   # D (P_virt o R) at the impact point
    d_virt: np.ndarray         # D P_virt at the impact point

    @property
    def jac(self) -> np.ndarray:
        """Derivative of the VIVID function in ``(y_imp, z_imp)``."""
        return self.d_global @ self.d_virt_reset - self.d_virt

    @property
    def monodromy(self) -> np.ndarray:
        """Linearised ``P_global^p o P_disc`` about a zero, in section coordinates."""
        return self.d_global @ self.d_virt_reset @ np.linalg.inv(self.d_virt)


def vivid_eval(ip: ImpactPoint, p: int, sys, pp, cfg=DEFAULT_CONFIG) -> VividEval:
    y_rec, z_rec = reset(ip.y_imp, ip.z_imp, sys, pp, wrap=False)
    start, d_vr = p_virt_jac(ImpactPoint(y_rec, z_rec), sys, pp, cfg)
    d_vr = d_vr @ reset_jac(ip.y_imp, ip.z_imp, sys, pp)
    last, inner, d_g = p_global_iter_jac(p, start, sys, pp, cfg)
    hat, d_v = p_virt_jac(ip, sys, pp, cfg)
    value = np.array([last.x - hat.x, unwrap_near(last.z, hat.z) - hat.z])
    return VividEval(ip, value, [start, *inner, last], hat, d_g, d_vr, d_v)
