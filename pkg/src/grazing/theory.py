"""Closed-form side of the unfolding: spectral data, the ``S_p``/``T_p``/``H_p``
sequences, emanation-side predictions and the quadratic coefficients of the
saddle-node and period-doubling curves at resonant grazing.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.optimize import brentq

from .errors import BracketFailed, DegenerateDenominator, NotAtResonance, NotGrazing
from .model import a_graz

RESONANCE_TOL = 1e-6


@dataclass(frozen=True)
class SpectralData:
    tau: float
    delta: float
    lambda1: complex
    lambda2: complex
    r: float
    theta: float | None

    @property
    def in_trapezium(self) -> bool:
        return 0.0 < self.delta < 1.0 and abs(self.tau) < self.delta + 1.0


def spectral_from(tau, delta) -> SpectralData:
    disc = cmath.sqrt(tau * tau - 4.0 * delta)
    lam1 = 0.5 * (tau + disc)
    lam2 = 0.5 * (tau - disc)
    r = math.sqrt(delta) if delta > 0 else float("nan")
    theta = None
    if delta > 0 and tau < 2.0 * r:
        theta = math.acos(max(-1.0, tau / (2.0 * r)))
    return SpectralData(float(tau), float(delta), complex(lam1), complex(lam2), r, theta)


def spectral(a_mat) -> SpectralData:
    """Trace, determinant and eigenvalues of a 2x2 matrix."""
    a = np.asarray(a_mat, dtype=float)
    return spectral_from(a[0, 0] + a[1, 1], a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])


# -- sequences ------------------------------------------------------------------

def s_sequence(n: int, tau, delta) -> np.ndarray:
    """``S_0, ..., S_n`` from ``S_{j+1} = tau S_j - delta S_{j-1}``, ``S_0 = 0, S_1 = 1``."""
    s = np.zeros(max(n, 1) + 1)
    s[1] = 1.0
    for j in range(1, n):
        s[j + 1] = tau * s[j] - delta * s[j - 1]
    return s[: n + 1]


def t_sequence(n: int, tau, delta) -> np.ndarray:
    """``T_0, ..., T_n`` with ``T_j = S_1 + ... + S_{j-1}``."""
    s = s_sequence(max(n - 1, 1), tau, delta)
    t = np.zeros(n + 1)
    for j in range(2, n + 1):
        t[j] = t[j - 1] + s[j - 1]
    return t


def s_seq(p: int, sd: SpectralData):
    """``(S_p, T_p)`` for the eigenvalues in ``sd``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(s_sequence(p, sd.tau, sd.delta)[p]), float(t_sequence(p, sd.tau, sd.delta)[p])


def g_p(p, delta):
    """``2 sqrt(delta) cos(pi / p)``; ``p`` need not be an integer."""
    return 2.0 * math.sqrt(delta) * math.cos(math.pi / p)


def H_p(tau, delta, p: int):
    """``sum_{j=1}^{p-1} S_j / delta^(j-1)``."""
    s = s_sequence(p, tau, delta)
    return float(sum(s[j] / delta ** (j - 1) for j in range(1, p)))


def h_p(p: int, delta):
    """Largest ``tau`` with ``H_p(tau, delta) = 0`` (``-2 sqrt(delta)`` for ``p = 2``)."""
    if p == 2:
        return -2.0 * math.sqrt(delta)
    if p < 2:
        raise ValueError("h_p is defined for p >= 2")
    lo = g_p(p / 2.0, delta) + 1e-12
    hi = g_p(p - 1, delta) - 1e-12
    f = lambda t: H_p(t, delta, p)
    if not (f(lo) < 0.0 < f(hi)):
        raise BracketFailed(f"H_{p} has no sign change on ({lo}, {hi}) at delta={delta}")
    # walk down from the top so the bracketed root is the largest one
    grid = np.linspace(hi, lo, 257)
    vals = [f(t) for t in grid]
    for k in range(len(grid) - 1):
        if vals[k] > 0.0 >= vals[k + 1]:
            return brentq(f, grid[k + 1], grid[k], xtol=1e-14, rtol=4 * np.finfo(float).eps)
    raise BracketFailed(f"H_{p} root not isolated at delta={delta}")


def u_profile(p: int, sd: SpectralData) -> np.ndarray:
    """``u_j = S_p T_j - S_j T_p`` for ``j = 0..p``.

    Proportional to ``dx^(j)/dmu`` along the emanating ``p``-loop orbit;
    admissibility needs every interior value negative.
    """
    if p < 2:
        raise ValueError("u_profile needs p >= 2")
    s = s_sequence(p, sd.tau, sd.delta)
    t = t_sequence(p, sd.tau, sd.delta)
    return s[p] * t - s * t[p]


# -- unfolding constants --------------------------------------------------------

@dataclass(frozen=True)
class CoeffSet:
    p: int
    omega: float
    alpha: float
    beta: float
    gamma: float
    phi: float
    psi: float
    tau: float
    delta: float
    a11: float
    a12: float
    a21: float
    a22: float
    kappa_p: float
    kappa_p_prime: float | None = None
    a12_prime: float | None = None
    xi_p: float | None = None
    s_plus: float | None = None
    s_minus: float | None = None
    c_sn: float | None = None
    c_pd: float | None = None
    E_p: float | None = None
    provenance: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return asdict(self)


def unfolding_constants(p: int, sys, derivs, sd: SpectralData, graz) -> CoeffSet:
    """Constants ``alpha, beta, gamma, kappa_p`` at a grazing point."""
    pp, zg = graz.pp, graz.z_graz
    f = sys.accel(0.0, 0.0, zg, pp)
    if not f < 0.0:
        raise NotGrazing(f"F = {f} >= 0 at the supplied grazing point")
    gamma = -f
    phi = sys.phi(0.0, zg, pp.mu, pp.eta)
    psi = sys.psi(0.0, zg, pp.mu, pp.eta)
    omega = sys.omega(pp)
    alpha = 1.0 + phi - gamma * psi / omega
    a = np.asarray(derivs.a_mat)
    b = np.asarray(derivs.b_vec)
    beta = (1.0 - a[1, 1]) * b[0] + a[0, 1] * b[1]
    kappa = sd.tau - g_p(p, sd.delta) if p >= 2 else float("nan")
    src = {f.name: "numeric" for f in fields(CoeffSet) if f.name not in ("p", "provenance")}
    for k in ("kappa_p_prime", "a12_prime", "xi_p", "s_plus", "s_minus", "c_sn", "c_pd", "E_p"):
        src[k] = "not computed"
    return CoeffSet(p, omega, alpha, beta, gamma, phi, psi, sd.tau, sd.delta,
                    a[0, 0], a[0, 1], a[1, 0], a[1, 1], kappa, provenance=src)


class Side(enum.Enum):
    RIGHT = "mu>0"
    LEFT = "mu<0"
    NOT_COVERED = "not-covered"


def emanation_side(p: int, cs: CoeffSet, sd: SpectralData) -> Side:
    """Side of the grazing bifurcation on which the ``p``-loop orbit appears."""
    if not sd.in_trapezium or cs.beta == 0.0:
        return Side.NOT_COVERED
    if p == 1:
        if cs.alpha <= 0.0 or cs.a12 == 0.0:
            return Side.NOT_COVERED
        return Side.RIGHT if cs.a12 * cs.beta > 0 else Side.LEFT
    if cs.a12 * cs.alpha <= 0.0 or cs.kappa_p == 0.0:
        return Side.NOT_COVERED
    if not sd.tau > h_p(p, sd.delta):
        return Side.NOT_COVERED
    return Side.RIGHT if cs.beta * cs.kappa_p > 0 else Side.LEFT


# -- resonant grazing -------------------------------------------------------------

def _c_pd(c_sn, s_plus, s_minus):
    q = s_plus / s_minus
    return q * (2.0 - q) * c_sn


def resonant_coeffs_general(p: int, cs: CoeffSet, xi_p: float, tol=RESONANCE_TOL) -> CoeffSet:
    """Quadratic coefficients from numerically evaluated map data.

    ``cs`` must carry ``a12_prime`` (``p = 1``) or ``kappa_p_prime`` (``p >= 2``).
    """
    a11, a12, a22 = cs.a11, cs.a12, cs.a22
    tau, delta = cs.tau, cs.delta
    alpha, beta, gamma, omega, phi = cs.alpha, cs.beta, cs.gamma, cs.omega, cs.phi
    if p == 1:
        if abs(a12) > tol:
            raise NotAtResonance(f"|a12| = {abs(a12):.3g} exceeds {tol}")
        extra = alpha ** 2 * omega ** 2 * xi_p / ((1.0 - a22) * gamma)
        s_plus = (1.0 - a22) * (a11 * phi ** 2 - 1.0) + extra
        s_minus = (1.0 + a22) * (a11 * phi ** 2 + 1.0) + extra
        _nonzero(s_plus, s_minus)
        c_sn = (alpha * omega * cs.a12_prime) ** 2 / (2.0 * beta * gamma * s_plus)
    else:
        if abs(cs.kappa_p) > tol:
            raise NotAtResonance(f"|kappa_{p}| = {abs(cs.kappa_p):.3g} exceeds {tol}")
        hp = delta ** (p / 2.0)
        extra = alpha ** 2 * omega ** 2 * xi_p / ((1.0 + hp) * gamma)
        s_plus = (1.0 + hp) * (-hp * phi ** 2 - 1.0) + extra
        s_minus = (1.0 - hp) * (-hp * phi ** 2 + 1.0) + extra
        _nonzero(s_plus, s_minus)
        lead = (p * a12 * alpha * omega * delta ** (p / 2.0 - 1.0) * cs.kappa_p_prime
                / (2.0 * math.sin(math.pi / p) ** 2 * (1.0 + hp)))
        c_sn = lead ** 2 * (delta - tau + 1.0) / (2.0 * beta * gamma * s_plus)
    prov = dict(cs.provenance, xi_p="numeric", s_plus="numeric", s_minus="numeric",
                c_sn="numeric", c_pd="numeric")
    return replace(cs, xi_p=xi_p, s_plus=s_plus, s_minus=s_minus, c_sn=c_sn,
                   c_pd=_c_pd(c_sn, s_plus, s_minus), provenance=prov)


def _nonzero(s_plus, s_minus, tol=1e-12):
    if abs(s_plus) < tol or abs(s_minus) < tol:
        raise DegenerateDenominator("s+ or s- vanishes")


def resonance_frequency(p: int, n: int, zeta) -> float:
    """Forcing frequency of the ``(p, n)`` resonance on the grazing curve.

    ``p = 1``: ``omega1 / omega = n / 2``.  ``p >= 2``: ``omega1 / omega = n + 1/(2p)``.
    """
    w1 = math.sqrt(1.0 - zeta ** 2)
    if p == 1:
        return 2.0 * w1 / n
    return w1 / (n + 1.0 / (2.0 * p))


def osc_a_matrix(omega, zeta) -> np.ndarray:
    w1 = math.sqrt(1.0 - zeta ** 2)
    e = math.exp(-2.0 * math.pi * zeta / omega)
    th = 2.0 * math.pi * w1 / omega
    c, s = math.cos(th), math.sin(th)
    return e * np.array([[c + zeta / w1 * s, omega / w1 * s],
                         [-s / (w1 * omega), c - zeta / w1 * s]])


def osc_b_vector(omega, zeta) -> np.ndarray:
    a = osc_a_matrix(omega, zeta)
    return np.array([1.0 - a[0, 0], -a[1, 0]]) / a_graz(omega, zeta)


def osc_tau_delta(omega, zeta):
    return (2.0 * math.exp(-2.0 * math.pi * zeta / omega)
            * math.cos(2.0 * math.pi * math.sqrt(1.0 - zeta ** 2) / omega),
            math.exp(-4.0 * math.pi * zeta / omega))


def osc_xi(p: int, omega, zeta) -> float:
    """``d2 (P^p)_1 / dz2`` for the oscillator at grazing (any frequency)."""
    w1 = math.sqrt(1.0 - zeta ** 2)
    th = 2.0 * math.pi * p * w1 / omega
    c, s = math.cos(th), math.sin(th)
    return (math.exp(-4.0 * math.pi * p * zeta / omega) * (c - zeta / w1 * s) ** 2
            - math.exp(-2.0 * math.pi * p * zeta / omega) * (c - 3.0 * zeta / w1 * s))


def resonant_coeffs_osc(p: int, n: int, zeta, epsilon) -> CoeffSet:
    """All unfolding coefficients of the oscillator at the ``(p, n)`` resonance, closed form."""
    omega = resonance_frequency(p, n, zeta)
    w1 = math.sqrt(1.0 - zeta ** 2)
    a = osc_a_matrix(omega, zeta)
    tau, delta = osc_tau_delta(omega, zeta)
    ag = a_graz(omega, zeta)
    beta = (delta - tau + 1.0) / ag
    alpha = 1.0 + epsilon
    gamma = omega ** 2
    e_p = math.exp(-2.0 * math.pi * p * zeta / omega)
    kappa_prime = a12_prime = None
    if p == 1:
        sgn = (-1) ** n
        a12 = 0.0
        xi = e_p * (e_p - sgn)
        a12_prime = -2.0 * math.pi * sgn * e_p / omega
        if n % 2:
            s_plus = -(1.0 - epsilon * e_p) ** 2
            s_minus = (1.0 + epsilon * e_p) ** 2
            c_sn = (-2.0 * math.pi ** 2 * ag / omega ** 2
                    * ((1.0 + epsilon) * e_p / ((1.0 - epsilon * e_p) * (1.0 + e_p))) ** 2)
            c_pd = (-(1.0 - epsilon * e_p) ** 2
                    * ((1.0 + epsilon * e_p) ** 2 + 2.0 * (1.0 + epsilon ** 2 * e_p ** 2))
                    / (1.0 + epsilon * e_p) ** 4 * c_sn)
        else:
            s_plus = -(1.0 + epsilon * e_p) ** 2
            s_minus = (1.0 - epsilon * e_p) ** 2
            c_sn = (-2.0 * math.pi ** 2 * ag / omega ** 2
                    * ((1.0 + epsilon) * e_p / ((1.0 + epsilon * e_p) * (1.0 - e_p))) ** 2)
            c_pd = (-(1.0 + epsilon * e_p) ** 2
                    * ((1.0 - epsilon * e_p) ** 2 + 2.0 * (1.0 + epsilon ** 2 * e_p ** 2))
                    / (1.0 - epsilon * e_p) ** 4 * c_sn)
        kappa = float("nan")
    else:
        a12 = math.exp(-2.0 * math.pi * zeta / omega) * math.sin(math.pi / p) / (n + 1.0 / (2 * p))
        xi = e_p * (e_p + 1.0)
        kappa = 0.0
        kappa_prime = (4.0 * math.pi * w1 / omega ** 2 * math.exp(-2.0 * math.pi * zeta / omega)
                       * math.sin(math.pi / p))
        s_plus = -(1.0 - epsilon * e_p) ** 2
        s_minus = (1.0 + epsilon * e_p) ** 2
        c_sn = (-2.0 * math.pi ** 2 * p ** 2 * ag / omega ** 2
                * ((1.0 + epsilon) * e_p / ((1.0 - epsilon * e_p) * (1.0 + e_p))) ** 2)
        c_pd = (-(1.0 - epsilon * e_p) ** 2
                * ((1.0 + epsilon * e_p) ** 2 + 2.0 * (1.0 + epsilon ** 2 * e_p ** 2))
                / (1.0 + epsilon * e_p) ** 4 * c_sn)
    prov = {f.name: "closed-form" for f in fields(CoeffSet) if f.name not in ("p", "provenance")}
    prov["kappa_p_prime" if p == 1 else "a12_prime"] = "not applicable"
    return CoeffSet(p, omega, alpha, beta, gamma, epsilon, 0.0, tau, delta,
                    a[0, 0], a12, a[1, 0], a[1, 1], kappa,
                    kappa_p_prime=kappa_prime, a12_prime=a12_prime, xi_p=xi,
                    s_plus=s_plus, s_minus=s_minus, c_sn=c_sn, c_pd=c_pd, E_p=e_p,
                    provenance=prov)


def curve_sides(cs: CoeffSet):
    """``sgn(eta)`` on which the SN and PD curves exist: ``(sn_sign, pd_sign)``."""
    deriv = cs.a12_prime if cs.p == 1 else cs.kappa_p_prime
    return int(np.sign(deriv * cs.s_plus)), int(np.sign(deriv * cs.s_minus))


@dataclass(frozen=True)
class PredictedCurve:
    kind: str
    eta: np.ndarray
    mu: np.ndarray
    amp: np.ndarray | None = None
    omega: np.ndarray | None = None


def predicted_curves(cs: CoeffSet, eta_max, n=50, omega_star=None, zeta=None):
    """Sample ``mu = c eta^2`` for SN and PD on the half-lines where they exist.

    With ``omega_star`` and ``zeta`` the samples are also mapped to
    ``(amp, omega)`` via ``omega = omega_star + eta``, ``amp = a_graz(omega) + mu``.
    """
    sn_sign, pd_sign = curve_sides(cs)
    out = {}
    for kind, c, sign in (("SN", cs.c_sn, sn_sign), ("PD", cs.c_pd, pd_sign)):
        eta = sign * np.linspace(0.0, eta_max, n)
        mu = c * eta ** 2
        amp = omega = None
        if omega_star is not None:
            omega = omega_star + eta
            amp = np.array([a_graz(w, zeta) for w in omega]) + mu
        out[kind] = PredictedCurve(kind, eta, mu, amp, omega)
    return out
