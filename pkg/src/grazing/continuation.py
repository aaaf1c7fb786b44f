"""Continuation of p-loop MPS branches in ``mu`` and of saddle-node,
period-doubling and grazing curves in the ``(mu, eta)`` plane.

Both levels use pseudo-arclength predictor-corrector stepping.  Unknowns are
``(y_imp, z_imp, mu)`` for branches and ``(y_imp, z_imp, mu, eta)`` for curves;
the equations are the VIVID function, with ``v2`` divided by ``omega``, plus
one test function for curves.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (BranchLost, CurveLost, FixedPointLost, GrazingError, LeftNeighbourhood,
                     NoResonanceInRange, NumericalFailure, TangentDegenerate)
from .maps import (DEFAULT_CONFIG, ImpactPoint, locate_grazing, numeric_first_derivs, p_global,
                   vivid_eval)
from .model import ImpactOscillator, ParamPoint, wrap_phase
from .mps import MpsSolution, build_solution, linear_seed, solve_mps
from .theory import g_p, resonance_frequency, spectral

log = logging.getLogger(__name__)

CSV_HEADER = ["kind", "p", "mu", "eta", "amp", "omega", "y_imp", "z_imp", "residual"]


@dataclass(frozen=True)
class ContinuationConfig:
    step0: float = 1e-4
    step_max: float = 1e-2
    step_min_halvings: int = 3
    grow_after: int = 4
    max_steps: int = 400
    newton_tol: float = 1e-10
    newton_max: int = 12
    event_tol: float = 1e-10
    y_max: float = 5.0
    z_half: float = math.pi
    fd_h: float = 1e-7


DEFAULT_CONT = ContinuationConfig()


@dataclass(frozen=True)
class BifurcationRecord:
    kind: str                   # "SN" | "PD" | "GZ"
    p: int
    params: ParamPoint
    impact: ImpactPoint
    refinement_residual: float
    crossing_index: int | None = None   # GZ only: 0 for y_imp = 0, j for x^(j) = 0

    def to_dict(self, sys=None):
        d = {"kind": self.kind, "p": self.p, "mu": self.params.mu, "eta": self.params.eta,
             "y_imp": self.impact.y_imp, "z_imp": wrap_phase(self.impact.z_imp),
             "refinement_residual": self.refinement_residual,
             "crossing_index": self.crossing_index}
        if isinstance(sys, ImpactOscillator):
            d["amp"], d["omega"] = sys.physical(self.params)
        return d


@dataclass(frozen=True)
class BranchSample:
    sol: MpsSolution
    arclength: float
    flags: dict


@dataclass
class CurvePoint:
    mu: float
    eta: float
    y_imp: float
    z_imp: float
    residual: float


@dataclass
class CurveSample:
    kind: str                   # "SN" | "PD" | "GZ"
    p: int
    points: list = field(default_factory=list)
    stop_reason: str = ""

    @property
    def mu(self):
        return np.array([q.mu for q in self.points])

    @property
    def eta(self):
        return np.array([q.eta for q in self.points])

    @property
    def y_imp(self):
        return np.array([q.y_imp for q in self.points])

    def sorted(self) -> "CurveSample":
        pts = sorted(self.points, key=lambda q: q.eta)
        return CurveSample(self.kind, self.p, pts, self.stop_reason)


# -- augmented systems --------------------------------------------------------------

class _System:
    """Residual of the VIVID equations (optionally plus a test function) on a vector of unknowns.

    ``layout`` names the unknowns, a subset of ``("y", "z", "mu", "eta")``;
    missing ones are held at ``fixed``.
    """

    def __init__(self, p, sys, cfg, layout, fixed, extra=None):
        self.p, self.sys, self.cfg = p, sys, cfg
        self.layout = layout
        self.fixed = dict(fixed)
        self.extra = extra
        self._cache = {}

    def unpack(self, u):
        vals = dict(self.fixed)
        vals.update(zip(self.layout, (float(v) for v in u)))
        return vals

    def evaluate(self, u):
        key = tuple(float(v) for v in u)
        if key in self._cache:
            return self._cache[key]
        v = self.unpack(u)
        pp = ParamPoint(v["mu"], v["eta"])
        ev = vivid_eval(ImpactPoint(v["y"], v["z"]), self.p, self.sys, pp, self.cfg)
        omega = self.sys.omega(pp)
        res = [ev.value[0], ev.value[1] / omega]
        if self.extra is not None:
            res.append(self.extra(ev))
        out = (np.array(res), ev, pp)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = out
        return out

    def residual(self, u):
        return self.evaluate(u)[0]

    def steps(self, u, h):
        out = []
        for name, val in zip(self.layout, u):
            if name == "y":
                out.append(max(1e-5 * abs(val), 1e-11))
            else:
                out.append(h * max(1.0, abs(val)))
        return out

    def jac(self, u, h):
        u = np.asarray(u, dtype=float)
        cols = []
        for k, hk in enumerate(self.steps(u, h)):
            up, dn = u.copy(), u.copy()
            up[k] += hk
            dn[k] -= hk
            cols.append((self.residual(up) - self.residual(dn)) / (2.0 * hk))
        return np.column_stack(cols)


def _test_sn(ev):
    u = ev.monodromy
    return 1.0 - np.trace(u) + np.linalg.det(u)


def _test_pd(ev):
    u = ev.monodromy
    return 1.0 + np.trace(u) + np.linalg.det(u)


TESTS = {"SN": _test_sn, "PD": _test_pd}


def _newton(system: _System, u0, cc: ContinuationConfig, arc=None, max_du=None):
    """Newton on ``system`` (square) or ``system`` + the arclength row ``arc = (t, u_pred)``.

    Any single update longer than ``max_du`` counts as divergence.
    """
    u = np.array(u0, dtype=float)
    for _ in range(cc.newton_max):
        r = system.residual(u)
        if arc is not None:
            t, u_pred = arc
            r = np.append(r, t @ (u - u_pred))
        if np.max(np.abs(r)) < cc.newton_tol:
            return u, float(np.max(np.abs(r)))
        j = system.jac(u, cc.fd_h)
        if arc is not None:
            j = np.vstack([j, arc[0]])
        try:
            du = np.linalg.solve(j, -r)
        except np.linalg.LinAlgError as exc:
            raise TangentDegenerate("singular corrector matrix") from exc
        if not np.all(np.isfinite(du)):
            raise TangentDegenerate("non-finite Newton step")
        if max_du is not None and np.linalg.norm(du) > max_du:
            raise BranchLost("corrector step much larger than the predictor step")
        u = u + du
    r = system.residual(u)
    if arc is not None:
        r = np.append(r, arc[0] @ (u - arc[1]))
    norm = float(np.max(np.abs(r)))
    if norm < cc.newton_tol * 100:
        return u, norm
    raise BranchLost(f"corrector did not converge (residual {norm:.3g})")


def _tangent(jac, prev=None):
    """Unit null vector of an ``(n-1) x n`` Jacobian, oriented along ``prev``."""
    _, s, vt = np.linalg.svd(jac)
    if len(s) and s[-1] < 1e-14 * max(1.0, s[0]):
        raise TangentDegenerate("Jacobian lost rank")
    t = vt[-1]
    if prev is not None and t @ prev < 0:
        t = -t
    return t


# -- one-parameter branches ---------------------------------------------------------

def _branch_flags(sol: MpsSolution):
    st = sol.stability
    xs = [c.x for c in sol.crossings[1:sol.p]]
    return {
        "y": sol.impact.y_imp,
        "sn": None if st is None else st.test_sn,
        "pd": None if st is None else st.test_pd,
        "interior": xs,
        "admissible": sol.admissible.admissible,
        "stable": None if st is None else st.stable,
    }


def _events_between(f0, f1):
    found = []
    if f0["sn"] is not None and f1["sn"] is not None and f0["sn"] * f1["sn"] < 0:
        found.append(("SN", None))
    if f0["pd"] is not None and f1["pd"] is not None and f0["pd"] * f1["pd"] < 0:
        found.append(("PD", None))
    if f0["y"] * f1["y"] < 0 or f1["y"] == 0.0:
        found.append(("GZ", 0))
    for j, (a, b) in enumerate(zip(f0["interior"], f1["interior"]), start=1):
        if a * b < 0 or b == 0.0:
            found.append(("GZ", j))
    return found


def _gz_function(j):
    if j == 0:
        return lambda ev: ev.impact.y_imp
    return lambda ev: ev.crossings[j].x


def refine_event(kind, p, u_a, u_b, eta, sys, cfg=DEFAULT_CONFIG, cc=DEFAULT_CONT,
                 crossing_index=None) -> BifurcationRecord:
    """Locate an SN/PD/GZ point between two branch samples ``u = (y, z, mu)``.

    Solved as the square system {VIVID = 0, test = 0} from the secant midpoint.
    """
    extra = TESTS[kind] if kind in TESTS else _gz_function(crossing_index)
    system = _System(p, sys, cfg, ("y", "z", "mu"), {"eta": eta}, extra)
    u0 = 0.5 * (np.asarray(u_a) + np.asarray(u_b))
    if kind == "GZ" and crossing_index == 0:
        # y = 0 exactly: solve the remaining 2x2 problem in (z, mu)
        sub = _System(p, sys, cfg, ("z", "mu"), {"eta": eta, "y": 0.0})
        u, res = _newton(sub, u0[1:], cc)
        y, z, mu = 0.0, u[0], u[1]
    else:
        u, res = _newton(system, u0, cc)
        y, z, mu = u
    return BifurcationRecord(kind, p, ParamPoint(float(mu), eta), ImpactPoint(float(y), float(z)),
                             res, crossing_index)


def continue_branch(p: int, eta: float, mu_range, start: MpsSolution, sys, cfg=DEFAULT_CONFIG,
                    cc=DEFAULT_CONT, direction=None, z_center=None, stop_at_grazing=True,
                    relabel=False):
    """Follow the ``p``-loop branch through ``start`` at fixed ``eta``.

    ``direction`` (+1 or -1) is the initial sign of ``d mu``; by default the
    branch is followed away from the nearer end of ``mu_range``.  Returns
    ``(samples, events)``.  The run ends when ``mu`` leaves ``mu_range``, at a
    grazing event (unless ``stop_at_grazing`` is false), or after
    ``cc.max_steps`` steps.

    Far from grazing an orbit can develop an extra local maximum of ``x``
    away from the wall, which changes its loop count.  With ``relabel`` set,
    a corrector failure triggers a retry as a ``(p + 1)``-loop solution just
    beyond the failure point; later samples and events then carry the new
    ``p``.
    """
    lo, hi = sorted(mu_range)
    mu0 = start.params.mu
    if not lo <= mu0 <= hi:
        raise ValueError("start is outside mu_range")
    if direction is None:
        direction = 1 if (hi - mu0) >= (mu0 - lo) else -1
    if z_center is None:
        z_center = start.impact.z_imp
    samples, events = [], []
    budget = cc.max_steps
    while True:
        try:
            s, e = _follow_branch(p, eta, (lo, hi), start, sys, cfg, cc, direction, z_center,
                                  stop_at_grazing, budget)
        except BranchLost as exc:
            s, e = exc.partial
            samples.extend(s if not samples else s[1:])
            events.extend(e)
            nxt = _relabelled(s[-2:], sys, cfg) if relabel and len(s) >= 2 else None
            if nxt is None:
                raise BranchLost(str(exc), partial=(samples, events)) from exc
            log.info("loop count changed from %d to %d at mu = %.6g", p, nxt.p, nxt.params.mu)
            direction = 1 if nxt.params.mu >= s[-1].sol.params.mu else -1
            p, start = nxt.p, nxt
            budget -= len(s)
            if budget <= 0:
                return samples, events
            continue
        samples.extend(s if not samples else s[1:])
        events.extend(e)
        return samples, events


def _relabelled(last_two, sys, cfg, multiples=(1, 2, 3, 5, 8, 13, 21)):
    """Solution with one more loop just past the end of a lost branch, or ``None``.

    Guesses are secant extrapolations of the last two samples; a solve is
    accepted only if it lands close to its guess.
    """
    a, b = (smp.sol for smp in last_two)
    ua = np.array([a.impact.y_imp, a.impact.z_imp, a.params.mu])
    ub = np.array([b.impact.y_imp, b.impact.z_imp, b.params.mu])
    d = ub - ua
    if abs(d[2]) < 1e-6:
        d = d * (1e-6 / max(abs(d[2]), 1e-15))
    for k in multiples:
        y, z, mu = ub + k * d
        try:
            sol = solve_mps(b.p + 1, ParamPoint(mu, b.params.eta), ImpactPoint(y, z), sys, cfg)
        except GrazingError:
            continue
        close = abs(sol.impact.y_imp - y) < 0.05 * max(abs(y), 1e-3) and abs(sol.impact.z_imp - z) < 0.05
        if close and sol.admissible.admissible and sol.stability is not None:
            return sol
    return None


def _follow_branch(p, eta, mu_range, start, sys, cfg, cc, direction, z_center,
                   stop_at_grazing, max_steps):
    lo, hi = mu_range
    mu0 = start.params.mu
    system = _System(p, sys, cfg, ("y", "z", "mu"), {"eta": eta})
    u = np.array([start.impact.y_imp, start.impact.z_imp, mu0])
    sol = start
    samples = [BranchSample(sol, 0.0, _branch_flags(sol))]
    events = []
    t = _tangent(system.jac(u, cc.fd_h), np.array([0.0, 0.0, float(direction)]))
    h = cc.step0
    streak = 0
    arclength = 0.0
    for _ in range(max_steps):
        halvings = 0
        while True:
            u_pred = u + h * t
            try:
                u_new, res = _newton(system, u_pred, cc, arc=(t, u_pred), max_du=10.0 * h + 1e-6)
                break
            except (GrazingError, np.linalg.LinAlgError) as exc:
                halvings += 1
                if halvings > cc.step_min_halvings:
                    raise BranchLost(f"branch lost at mu = {u[2]:.6g}: {exc}",
                                     partial=(samples, events)) from exc
                h *= 0.5
                streak = 0
        _, ev, pp = system.evaluate(u_new)
        new_sol = build_solution(p, pp, ev, res)
        if abs(u_new[0]) > cc.y_max or abs(u_new[1] - z_center) > cc.z_half:
            raise LeftNeighbourhood(f"branch left the near-grazing box at mu = {u_new[2]:.6g}")
        flags = _branch_flags(new_sol)
        arclength += float(np.linalg.norm(u_new - u))
        found = _events_between(samples[-1].flags, flags)
        for kind, j in found:
            try:
                events.append(refine_event(kind, p, u, u_new, eta, sys, cfg, cc, j))
            except GrazingError as exc:
                log.warning("could not refine %s event: %s", kind, exc)
        t = _tangent(system.jac(u_new, cc.fd_h), t)
        u = u_new
        samples.append(BranchSample(new_sol, arclength, flags))
        if stop_at_grazing and any(k == "GZ" for k, _ in found):
            break
        if not lo <= u[2] <= hi:
            break
        streak += 1
        if streak >= cc.grow_after:
            h = min(2.0 * h, cc.step_max)
            streak = 0
    return samples, events


# -- two-parameter curves -------------------------------------------------------------

def continue_curve(kind: str, p: int, seed: BifurcationRecord, sys, cfg=DEFAULT_CONFIG,
                   cc=DEFAULT_CONT, eta_window=(-2.5e-3, 2.5e-3), y_min=1e-6,
                   both_directions=True, eta_step=2e-5) -> CurveSample:
    """Pseudo-arclength continuation of an SN or PD curve from ``seed``.

    Unknowns ``(y, z, mu, eta)``; equations ``v1 = v2/omega = test = 0``.  Each
    direction stops when ``eta`` leaves ``eta_window``, ``y_imp`` drops below
    ``y_min`` (the curve approaches its grazing end) or after ``cc.max_steps``.
    ``eta_step`` caps the change in ``eta`` per step so the curve is sampled
    densely enough for fitting.
    """
    if kind not in TESTS:
        raise ValueError("kind must be 'SN' or 'PD'")
    system = _System(p, sys, cfg, ("y", "z", "mu", "eta"), {}, TESTS[kind])
    u0 = np.array([seed.impact.y_imp, seed.impact.z_imp, seed.params.mu, seed.params.eta])
    u0, res0 = _newton(system, u0, cc)
    curve = CurveSample(kind, p, [_point(u0, res0)])
    t0 = _tangent(system.jac(u0, cc.fd_h), np.array([0.0, 0.0, 0.0, 1.0]))
    reasons = []
    for sign in ((1, -1) if both_directions else (1,)):
        pts, why = _curve_run(system, u0, sign * t0, cc, eta_window, y_min, eta_step)
        reasons.append(why)
        if sign == 1:
            curve.points.extend(pts)
        else:
            curve.points[:0] = pts[::-1]
    curve.stop_reason = "; ".join(reasons)
    return curve


def _point(u, res):
    y, z, mu, eta = (float(v) for v in u)
    return CurvePoint(mu, eta, y, z, float(res))


def _curve_run(system, u, t, cc, eta_window, y_min, eta_step):
    pts = []
    h = cc.step0
    streak = 0
    for _ in range(cc.max_steps):
        if abs(t[3]) * h > eta_step:
            h = eta_step / abs(t[3])
        halvings = 0
        while True:
            u_pred = u + h * t
            try:
                u_new, res = _newton(system, u_pred, cc, arc=(t, u_pred), max_du=10.0 * h + 1e-6)
                break
            except (GrazingError, np.linalg.LinAlgError) as exc:
                halvings += 1
                if halvings > cc.step_min_halvings:
                    if pts:
                        return pts, f"stopped: {exc}"
                    raise CurveLost(str(exc)) from exc
                h *= 0.5
                streak = 0
        if u_new[0] < y_min:
            return pts, "y_imp reached the grazing end"
        if not eta_window[0] <= u_new[3] <= eta_window[1]:
            return pts, "left eta window"
        pts.append(_point(u_new, res))
        t = _tangent(system.jac(u_new, cc.fd_h), t)
        u = u_new
        streak += 1
        if streak >= cc.grow_after:
            h = min(2.0 * h, cc.step_max)
            streak = 0
    return pts, "step budget exhausted"


def fit_quadratic(curve: CurveSample, eta_fit=2e-3, eta_floor=1e-4, eta0=0.0):
    """Least-squares ``mu = c (eta - eta0)^2`` over ``eta_floor <= |eta - eta0| <= eta_fit``.

    Returns ``(c, standard_error, n_used)``.
    """
    e = curve.eta - eta0
    m = curve.mu
    keep = (np.abs(e) >= eta_floor) & (np.abs(e) <= eta_fit)
    if keep.sum() < 3:
        raise CurveLost("too few curve samples in the fitting window")
    x = e[keep] ** 2
    y = m[keep]
    c = float(x @ y / (x @ x))
    resid = y - c * x
    dof = max(int(keep.sum()) - 1, 1)
    se = float(math.sqrt((resid @ resid) / dof / (x @ x)))
    return c, se, int(keep.sum())


# -- grazing curve and resonances -------------------------------------------------------

def grazing_curve(sys, omega_grid, cfg=DEFAULT_CONFIG, generic=False) -> CurveSample:
    """Grazing amplitude along a grid of frequencies.

    The oscillator answer is the closed form unless ``generic`` is set, in
    which case the fixed-point condition ``P_global(0, z) = (0, z)`` is solved
    for ``(mu, z)`` at each grid point, continuing the previous solution.
    """
    curve = CurveSample("GZ", 0)
    if sys.closed_form and not generic:
        for w in omega_grid:
            pp = ParamPoint(0.0, float(w) - sys.omega_ref)
            curve.points.append(CurvePoint(0.0, pp.eta, 0.0, sys.grazing_phase(pp), 0.0))
        return curve
    guess = None
    for w in omega_grid:
        eta = float(w) - sys.omega_ref if hasattr(sys, "omega_ref") else float(w)
        if guess is None:
            guess = (0.0, sys.grazing_phase(ParamPoint(0.0, eta))) if sys.closed_form else (0.0, 0.0)
        graz = _generic_grazing(sys, eta, cfg, guess)
        out = p_global(graz.section_point, sys, graz.pp, cfg)
        curve.points.append(CurvePoint(graz.pp.mu, eta, 0.0, graz.z_graz,
                                       float(max(abs(out.x), abs(out.z - graz.z_graz)))))
        guess = (graz.pp.mu, graz.z_graz)
    return curve


def _generic_grazing(sys, eta, cfg, guess):
    black_box = sys
    if sys.closed_form:
        black_box = as_black_box(sys)
    try:
        return locate_grazing(black_box, eta, cfg, guess=guess)
    except NumericalFailure as exc:
        raise FixedPointLost(f"grazing fixed point lost at eta = {eta:g}: {exc}") from exc


def as_black_box(sys):
    """The same system with the closed-form fast paths disabled."""
    from .model import HybridSystem
    return HybridSystem(sys.field, sys.phi, sys.psi, sys.omega_of,
                        sys.extension_halfwidth, sys.name + " (integrated)")


@dataclass(frozen=True)
class ResonantGrazing:
    p: int
    n: int
    omega_star: float
    sys: object                         # system re-centred so eta = omega - omega_star
    sn_seed: BifurcationRecord | None
    pd_seed: BifurcationRecord | None
    coeffs: object = None


def resonance_condition(p, sys, eta, cfg=DEFAULT_CONFIG):
    """``a12`` (p = 1) or ``kappa_p = tau - g_p(delta)`` (p >= 2) at grazing, from numeric A."""
    graz = locate_grazing(sys, eta, cfg, guess=None if sys.closed_form else (0.0, 0.0))
    d = numeric_first_derivs(sys, graz, cfg)
    if p == 1:
        return float(d.a_mat[0, 1])
    sd = spectral(d.a_mat)
    return sd.tau - g_p(p, sd.delta)


def find_resonant_grazing(p: int, n: int, sys, cfg=DEFAULT_CONFIG, cc=DEFAULT_CONT,
                          eta_seed=1e-3, omega_window=None, seeds=True) -> ResonantGrazing:
    """Locate the ``(p, n)`` resonant grazing point and SN/PD seeds near it.

    For the oscillator ``omega*`` is closed-form; the system is then re-centred
    there.  Seeds are found at ``|eta| = eta_seed`` on the side where each curve
    exists, by following the branch emanating from grazing until the test
    function changes sign.
    """
    if p < 1 or n < 1:
        raise ValueError("p and n must be >= 1")
    if not isinstance(sys, ImpactOscillator):
        raise NotImplementedError("generic resonance search: use resonance_root")
    w_star = resonance_frequency(p, n, sys.zeta)
    if omega_window is not None and not omega_window[0] <= w_star <= omega_window[1]:
        raise NoResonanceInRange(f"omega* = {w_star:.6g} outside {omega_window}")
    centred = sys.with_reference(w_star)
    from .theory import curve_sides, resonant_coeffs_osc
    cs = resonant_coeffs_osc(p, n, sys.zeta, sys.epsilon)
    if not seeds:
        return ResonantGrazing(p, n, w_star, centred, None, None, cs)
    sn_side, pd_side = curve_sides(cs)
    sn = _seed_event("SN", p, sn_side * eta_seed, cs.c_sn, centred, cfg, cc)
    pd = _seed_event("PD", p, pd_side * eta_seed, cs.c_pd, centred, cfg, cc)
    return ResonantGrazing(p, n, w_star, centred, sn, pd, cs)


def _seed_event(kind, p, eta, c_pred, sys, cfg, cc):
    """Follow the branch emanating from grazing at ``eta`` until a ``kind`` event."""
    mu_target = c_pred * eta ** 2
    direction = 1 if mu_target > 0 else -1
    mu0 = 0.02 * mu_target
    pp = ParamPoint(mu0, eta)
    start = solve_mps(p, pp, linear_seed(p, pp, sys, cfg), sys, cfg)
    if start.impact.y_imp < 0:
        raise NoResonanceInRange(f"{kind} seed: no MPS emanates on the predicted side")
    lo, hi = sorted((mu0 - 4 * abs(mu_target), mu0 + 4 * abs(mu_target)))
    # arclength is dominated by y_imp, which grows like |eta| * O(100) along these branches
    local = ContinuationConfig(step0=2e-3, step_max=2e-2, max_steps=200)
    samples, events = continue_branch(p, eta, (lo, hi), start, sys, cfg, local, direction,
                                      stop_at_grazing=False)
    for ev in events:
        if ev.kind == kind:
            return ev
    raise NoResonanceInRange(f"no {kind} event found on the branch at eta = {eta:g}")


def write_curve_csv(path, curve: CurveSample, sys):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for q in curve.points:
            pp = ParamPoint(q.mu, q.eta)
            if isinstance(sys, ImpactOscillator):
                amp, omega = sys.physical(pp)
            else:
                amp, omega = float("nan"), sys.omega(pp)
            w.writerow([curve.kind, curve.p, repr(q.mu), repr(q.eta), repr(amp), repr(omega),
                        repr(q.y_imp), repr(wrap_phase(q.z_imp)), repr(q.residual)])


def write_curve_metadata(path, curve: CurveSample, meta: dict):
    with open(path, "w") as fh:
        json.dump({"kind": curve.kind, "p": curve.p, "n_points": len(curve.points),
                   "stop_reason": curve.stop_reason, **meta}, fh, indent=2, default=_jsonable)


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


# -- numeric unfolding coefficients ------------------------------------------------------

def numeric_resonant_coeffs(p: int, sys, cfg=DEFAULT_CONFIG, eta=0.0, h_eta=1e-5):
    """Unfolding coefficients at a resonant grazing point from finite differences only.

    ``sys`` must be parameterised so that ``eta`` is the resonant point.  The
    eta-derivative of ``a12`` (p = 1) or ``kappa_p`` (p >= 2) is a central
    difference with step ``h_eta``.
    """
    from dataclasses import replace
    from .maps import numeric_second_derivs
    from .theory import resonant_coeffs_general, unfolding_constants

    guess = None if sys.closed_form else (0.0, 0.0)
    graz = locate_grazing(sys, eta, cfg, guess=guess)
    derivs = numeric_first_derivs(sys, graz, cfg)
    sd = spectral(derivs.a_mat)
    cs = unfolding_constants(p, sys, derivs, sd, graz)
    slope = (resonance_condition(p, sys, eta + h_eta, cfg)
             - resonance_condition(p, sys, eta - h_eta, cfg)) / (2.0 * h_eta)
    name = "a12_prime" if p == 1 else "kappa_p_prime"
    cs = replace(cs, **{name: slope}, provenance=dict(cs.provenance, **{name: "numeric"}))
    xi = numeric_second_derivs(p, sys, graz, cfg).xi_p
    return resonant_coeffs_general(p, cs, xi)


def resonance_root(p: int, sys, eta_bracket, cfg=DEFAULT_CONFIG, xtol=1e-12):
    """``eta`` at which the ``p``-resonance condition vanishes along the grazing curve."""
    from scipy.optimize import brentq
    lo, hi = eta_bracket
    f = lambda e: resonance_condition(p, sys, e, cfg)
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0.0:
        raise NoResonanceInRange(f"no sign change of the p={p} resonance condition on {eta_bracket}")
    return brentq(f, lo, hi, xtol=xtol)


def branch_from_grazing(p: int, sys, eta=0.0, mu_span=0.1, cfg=DEFAULT_CONFIG, cc=None,
                        mu_seed=1e-4, relabel=True):
    """Follow the ``p``-loop branch born at the grazing point ``(mu_graz(eta), eta)``.

    The seed is the linearised VIVID solution at ``mu_graz +/- mu_seed`` on
    whichever side gives an admissible solution; the branch is then followed
    away from grazing for up to ``mu_span`` in ``mu``.  Returns
    ``(samples, events)``.
    """
    cc = cc or ContinuationConfig(step0=1e-3, max_steps=600)
    graz = locate_grazing(sys, eta, cfg, guess=None if sys.closed_form else (0.0, 0.0))
    mu_g = graz.pp.mu
    for sgn in (1.0, -1.0):
        pp = ParamPoint(mu_g + sgn * mu_seed, eta)
        try:
            start = solve_mps(p, pp, linear_seed(p, pp, sys, cfg, graz), sys, cfg)
        except GrazingError:
            continue
        if start.admissible.admissible:
            break
    else:
        raise BranchLost(f"no admissible {p}-loop solution next to grazing")
    rng = (mu_g - mu_span, mu_g + mu_span)
    return continue_branch(p, eta, rng, start, sys, cfg, cc, direction=int(sgn),
                           stop_at_grazing=True, relabel=relabel)
