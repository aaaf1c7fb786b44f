"""Impacting hybrid systems and the harmonically forced linear impact oscillator.

A system is an ODE ``x'' = F(x, x', t)`` written autonomously in the
variables ``(x, y, z)`` with ``y = x'`` and ``z`` the forcing phase, together
with a wall at ``x = 0`` and a reset law applied on arrival with ``y > 0``::

    R(y, z) = (-y * Phi(y, z), z + y * Psi(y, z))

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameters

TWO_PI = 2.0 * math.pi


def wrap_phase(z):
    """Reduce a phase (scalar or array) to ``[0, 2*pi)``."""
    w = np.mod(z, TWO_PI)
    if np.ndim(w) == 0:
        w = float(w)
        return 0.0 if w >= TWO_PI else w
    return w


@dataclass(frozen=True)
class State:
    x: float
    y: float
    z: float

    def wrapped(self) -> "State":
        return State(self.x, self.y, wrap_phase(self.z))


@dataclass(frozen=True)
class ParamPoint:
    """Unfolding parameters: ``mu`` crosses grazing at 0, ``eta`` moves along it."""

    mu: float = 0.0
    eta: float = 0.0

    def shifted(self, dmu=0.0, deta=0.0) -> "ParamPoint":
        return ParamPoint(self.mu + dmu, self.eta + deta)


@dataclass(frozen=True)
class OscParams:
    """Parameters of ``x'' + 2 zeta x' + x + 1 = amp cos(omega t)``, wall at 0."""

    zeta: float
    epsilon: float
    amp: float
    omega: float

    def __post_init__(self):
        if not 0.0 < self.zeta < 1.0:
            raise InvalidParameters(f"zeta must lie in (0, 1), got {self.zeta}")
        if not 0.0 < self.epsilon <= 1.0:
            raise InvalidParameters(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not self.omega > 0.0:
            raise InvalidParameters(f"omega must be positive, got {self.omega}")
        if not self.amp >= 0.0:
            raise InvalidParameters(f"amp must be non-negative, got {self.amp}")

    @property
    def omega1(self) -> float:
        """Damped natural frequency."""
        return math.sqrt(1.0 - self.zeta ** 2)

    @property
    def lossless(self) -> bool:
        # Several closed forms degenerate when no energy is lost at impact.
        return self.epsilon == 1.0

    @property
    def period(self) -> float:
        return TWO_PI / self.omega


# -- the linear oscillator ----------------------------------------------------

def osc_field(s: State, p: OscParams):
    """Right-hand side ``(x', y', z')`` of the oscillator; ``z`` is the forcing angle."""
    dy = -2.0 * p.zeta * s.y - s.x - 1.0 + p.amp * math.cos(s.z)
    return s.y, dy, p.omega


def _forcing_gain(omega, zeta):
    return (1.0 - omega ** 2) ** 2 + 4.0 * zeta ** 2 * omega ** 2


def phi_p(t, p: OscParams):
    """Periodic particular solution and its time derivative at time(s) ``t``."""
    m = p.amp / _forcing_gain(p.omega, p.zeta)
    c = 1.0 - p.omega ** 2
    s = 2.0 * p.zeta * p.omega
    wt = p.omega * np.asarray(t, dtype=float)
    cos_wt, sin_wt = np.cos(wt), np.sin(wt)
    x = -1.0 + m * (c * cos_wt + s * sin_wt)
    v = m * p.omega * (-c * sin_wt + s * cos_wt)
    if np.ndim(x) == 0:
        return float(x), float(v)
    return x, v


def osc_flow(x0, y0, t0, t, p: OscParams):
    """Exact solution ``(x(t), y(t))`` through ``(x0, y0)`` at time ``t0``.

    ``t`` may be an array; time may run backwards.
    """
    w1 = p.omega1
    xp0, vp0 = phi_p(t0, p)
    u0 = x0 - xp0
    v0 = y0 - vp0
    s = np.asarray(t, dtype=float) - t0
    decay = np.exp(-p.zeta * s)
    c, sn = np.cos(w1 * s), np.sin(w1 * s)
    xh = decay * (u0 * c + (v0 + p.zeta * u0) / w1 * sn)
    vh = decay * (v0 * c - (u0 + p.zeta * v0) / w1 * sn)
    xp, vp = phi_p(t, p)
    x = xh + xp
    y = vh + vp
    if np.ndim(x) == 0:
        return float(x), float(y)
    return x, y


def a_graz(omega, zeta):
    """Forcing amplitude at which the non-impacting orbit touches ``x = 0``."""
    return math.sqrt(_forcing_gain(omega, zeta))


def z_graz(omega, zeta):
    """Phase in ``[0, 2*pi)`` at which the grazing orbit touches the wall."""
    return wrap_phase(math.atan2(2.0 * zeta * omega, 1.0 - omega ** 2))


# -- generic hybrid systems ---------------------------------------------------

FieldFn = Callable[[float, float, float, float, float], float]
ResetFn = Callable[[float, float, float, float], float]


@dataclass(frozen=True)
class HybridSystem:
    """A forced one-degree-of-freedom oscillator hitting a wall at ``x = 0``.

    Parameters
    ----------
    field : callable
        ``field(x, y, z, mu, eta)`` returns the acceleration ``F``.
    phi, psi : callable
        ``phi(y, z, mu, eta) > 0`` and ``psi(y, z, mu, eta)`` of the reset law.
    omega_of : callable
        ``omega_of(mu, eta)`` returns the forcing frequency.
    extension_halfwidth : float
        Largest ``|x|`` for which ``field`` is trusted as a smooth extension
        past the wall.  Integrations raise ``ExtensionExceeded`` beyond it.
    """

    field: FieldFn
    phi: ResetFn
    psi: ResetFn
    omega_of: Callable[[float, float], float]
    extension_halfwidth: float = math.inf
    name: str = "generic"

    def omega(self, pp: ParamPoint) -> float:
        return float(self.omega_of(pp.mu, pp.eta))

    def accel(self, x, y, z, pp: ParamPoint) -> float:
        return self.field(x, y, z, pp.mu, pp.eta)

    @property
    def closed_form(self) -> bool:
        return False


@dataclass(frozen=True)
class ImpactOscillator(HybridSystem):
    """The linear oscillator in unfolding coordinates.

    ``mu = amp - a_graz(omega)`` and ``eta = omega - omega_ref``, so ``mu = 0``
    is the grazing curve for every ``eta``.  Flows use the exact solution.
    """

    zeta: float = 0.02
    epsilon: float = 0.9
    omega_ref: float = 0.854

    @classmethod
    def create(cls, zeta=0.02, epsilon=0.9, omega_ref=0.854) -> "ImpactOscillator":
        OscParams(zeta, epsilon, 0.0, omega_ref)  # validates

        def acc(x, y, z, mu, eta):
            amp = a_graz(omega_ref + eta, zeta) + mu
            return -2.0 * zeta * y - x - 1.0 + amp * math.cos(z)

        return cls(
            field=acc,
            phi=lambda y, z, mu, eta: epsilon,
            psi=lambda y, z, mu, eta: 0.0,
            omega_of=lambda mu, eta: omega_ref + eta,
            name="impact-oscillator",
            zeta=zeta,
            epsilon=epsilon,
            omega_ref=omega_ref,
        )

    @property
    def closed_form(self) -> bool:
        return True

    def osc_params(self, pp: ParamPoint) -> OscParams:
        omega = self.omega_ref + pp.eta
        return OscParams(self.zeta, self.epsilon, a_graz(omega, self.zeta) + pp.mu, omega)

    def param_point(self, amp, omega) -> ParamPoint:
        """Unfolding coordinates of a physical ``(amp, omega)`` pair."""
        return ParamPoint(amp - a_graz(omega, self.zeta), omega - self.omega_ref)

    def physical(self, pp: ParamPoint):
        """``(amp, omega)`` of an unfolding-coordinate point."""
        omega = self.omega_ref + pp.eta
        return a_graz(omega, self.zeta) + pp.mu, omega

    def grazing_phase(self, pp: ParamPoint = ParamPoint()) -> float:
        return z_graz(self.omega_ref + pp.eta, self.zeta)

    def with_reference(self, omega_ref) -> "ImpactOscillator":
        return ImpactOscillator.create(self.zeta, self.epsilon, omega_ref)


def reset(y, z, sys: HybridSystem, pp: ParamPoint, wrap=True):
    """Apply the reset law ``(y, z) -> (-y Phi, z + y Psi)``.

    Also valid for ``y < 0`` (the smooth extension used by the virtual map).
    With ``wrap=False`` the phase is left unwrapped.
    """
    y_new = -y * sys.phi(y, z, pp.mu, pp.eta)
    z_new = z + y * sys.psi(y, z, pp.mu, pp.eta)
    return y_new, (wrap_phase(z_new) if wrap else z_new)
