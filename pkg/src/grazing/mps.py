"""p-loop maximal periodic solutions (one impact, ``p`` loops) as zeros of the
VIVID function, with stability and admissibility.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoConvergence, SingularJacobian, TooCloseToGrazing
from .maps import DEFAULT_CONFIG, ImpactPoint, vivid_eval
from .model import ParamPoint, wrap_phase

NEWTON_TOL = 1e-10
MAX_NEWTON = 30
MAX_COND = 1e12
MIN_STABILITY_Y = 1e-8
ADMISSIBILITY_BAND = 1e-12


@dataclass(frozen=True)
class StabilityInfo:
    trace_T: float
    det_D: float
    multipliers: tuple

    @property
    def test_sn(self) -> float:
        return 1.0 - self.trace_T + self.det_D

    @property
    def test_pd(self) -> float:
        return 1.0 + self.trace_T + self.det_D

    @property
    def stable(self) -> bool:
        return max(abs(m) for m in self.multipliers) < 1.0

    @classmethod
    def from_matrix(cls, u) -> "StabilityInfo":
        t = float(u[0, 0] + u[1, 1])
        d = float(u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0])
        return cls.from_trace_det(t, d)

    @classmethod
    def from_trace_det(cls, t, d) -> "StabilityInfo":
        root = np.sqrt(complex(t * t - 4.0 * d))
        return cls(t, d, (0.5 * (t + root), 0.5 * (t - root)))


@dataclass(frozen=True)
class Admissibility:
    admissible: bool
    violations: tuple  # 0 stands for the impact velocity, j >= 1 for crossing j


@dataclass(frozen=True)
class MpsSolution:
    p: int
    impact: ImpactPoint
    params: ParamPoint
    crossings: list
    residual: float
    stability: StabilityInfo | None = None
    admissible: Admissibility | None = None
    iterations: int = 0
    jac: np.ndarray | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        st = self.stability
        return {
            "p": self.p,
            "mu": self.params.mu,
            "eta": self.params.eta,
            "y_imp": self.impact.y_imp,
            "z_imp": wrap_phase(self.impact.z_imp),
            "crossings": [{"x": c.x, "z": wrap_phase(c.z)} for c in self.crossings],
            "residual": self.residual,
            "trace_T": None if st is None else st.trace_T,
            "det_D": None if st is None else st.det_D,
            "multipliers": None if st is None else [[m.real, m.imag] for m in st.multipliers],
            "test_sn": None if st is None else st.test_sn,
            "test_pd": None if st is None else st.test_pd,
            "admissible": None if self.admissible is None else self.admissible.admissible,
            "violations": None if self.admissible is None else list(self.admissible.violations),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _scaled(v, omega):
    return np.array([v[0], v[1] / omega])


def admissibility(sol: MpsSolution) -> Admissibility:
    """Positive impact velocity and every interior crossing strictly below the wall.

    Values within ``1e-12`` of the boundary count as violations.
    """
    bad = []
    if not sol.impact.y_imp > ADMISSIBILITY_BAND:
        bad.append(0)
    for j in range(1, sol.p):
        if not sol.crossings[j].x < -ADMISSIBILITY_BAND:
            bad.append(j)
    return Admissibility(not bad, tuple(bad))


def stability(sol: MpsSolution, sys, cfg=DEFAULT_CONFIG) -> StabilityInfo:
    """Multipliers of ``P_global^p o P_disc`` at the solution.

    The monodromy is assembled as ``D(P_global^p) D(P_virt o R) (D P_virt)^-1``
    in impact coordinates, which stays finite as ``y_imp -> 0``.
    """
    if sol.impact.y_imp < MIN_STABILITY_Y:
        raise TooCloseToGrazing(
            f"y_imp = {sol.impact.y_imp:.3g} is below {MIN_STABILITY_Y}; D P_virt is near singular")
    ev = vivid_eval(sol.impact, sol.p, sys, sol.params, cfg)
    return StabilityInfo.from_matrix(ev.monodromy)


def stability_from_eval(ev) -> StabilityInfo:
    return StabilityInfo.from_matrix(ev.monodromy)


def solve_mps(p: int, pp: ParamPoint, guess: ImpactPoint, sys, cfg=DEFAULT_CONFIG,
              tol=NEWTON_TOL, max_iter=MAX_NEWTON, with_stability=True) -> MpsSolution:
    """Damped Newton on the VIVID function from ``guess``.

    The residual is measured as ``max(|v1|, |v2| / omega)``; steps are halved
    until that norm decreases.
    """
    omega = sys.omega(pp)
    u = np.array([guess.y_imp, guess.z_imp], dtype=float)
    ev = vivid_eval(ImpactPoint(*u), p, sys, pp, cfg)
    res = _scaled(ev.value, omega)
    norm = float(np.max(np.abs(res)))
    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise NoConvergence(f"VIVID Newton did not converge in {max_iter} steps "
                                f"(residual {norm:.3g})")
        it += 1
        jac = np.diag([1.0, 1.0 / omega]) @ ev.jac
        if np.linalg.cond(jac) > MAX_COND:
            raise SingularJacobian("VIVID Jacobian is singular (resonant grazing?)")
        step = np.linalg.solve(jac, -res)
        lam = 1.0
        while True:
            trial = u + lam * step
            try:
                ev_t = vivid_eval(ImpactPoint(*trial), p, sys, pp, cfg)
                res_t = _scaled(ev_t.value, omega)
                norm_t = float(np.max(np.abs(res_t)))
            except Exception:
                norm_t = math.inf
            if norm_t < norm or lam < 1.0 / 64:
                break
            lam *= 0.5
        if not math.isfinite(norm_t):
            raise NoConvergence("VIVID evaluation failed along the Newton direction")
        if norm_t >= norm and norm < 1e3 * tol:
            break  # at the noise floor
        u, ev, res, norm = trial, ev_t, res_t, norm_t
    return build_solution(p, pp, ev, norm, it, with_stability)


def build_solution(p, pp, ev, residual, iterations=0, with_stability=True) -> MpsSolution:
    """Wrap a VIVID evaluation at a zero into an :class:`MpsSolution`."""
    impact = ImpactPoint(float(ev.impact.y_imp), float(ev.impact.z_imp))
    st = None
    if with_stability and impact.y_imp >= MIN_STABILITY_Y:
        st = stability_from_eval(ev)
    sol = MpsSolution(p, impact, pp, ev.crossings, residual, st, None, iterations, ev.jac)
    return replace(sol, admissible=admissibility(sol))


def linear_seed(p: int, pp: ParamPoint, sys, cfg=DEFAULT_CONFIG, graz=None) -> ImpactPoint:
    """Impact point of the ``p``-loop candidate from the VIVID function linearised at grazing.

    Uses ``P_virt(y, z) ~ (0, z + omega y / gamma)`` and the affine part of
    ``P_global^p``; accurate to first order in the distance ``mu - mu_graz``.
    """
    from .maps import locate_grazing, numeric_first_derivs
    if graz is None:
        graz = locate_grazing(sys, pp.eta, cfg, guess=None if sys.closed_form else (pp.mu, 0.0))
    d = numeric_first_derivs(sys, graz, cfg)
    a, b = d.a_mat, d.b_vec
    ap = np.linalg.matrix_power(a, p)
    bp = sum(np.linalg.matrix_power(a, j) for j in range(p)) @ b
    zg = graz.z_graz
    gamma = -sys.accel(0.0, 0.0, zg, graz.pp)
    omega = sys.omega(graz.pp)
    phi = sys.phi(0.0, zg, graz.pp.mu, graz.pp.eta)
    psi = sys.psi(0.0, zg, graz.pp.mu, graz.pp.eta)
    c = psi - phi * omega / gamma
    dmu = pp.mu - graz.pp.mu
    # unknowns (y, w) with w = z - z_graz
    m = np.array([[ap[0, 1] * c, ap[0, 1]],
                  [ap[1, 1] * c - omega / gamma, ap[1, 1] - 1.0]])
    y, w = np.linalg.solve(m, -bp * dmu)
    return ImpactPoint(float(y), float(zg + w))
