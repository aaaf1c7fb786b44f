"""Impact-free ("extended") flow of a hybrid system, and event location on it.

A :class:`Trajectory` produces the orbit through one state as a sequence of
pieces ``(s_a, s_b, evaluate)``, where ``s`` is the elapsed time measured in
the chosen direction (always non-negative) and ``evaluate(s)`` returns
``(x, y)``.  For the linear oscillator the pieces are exact; otherwise they
are the dense output of an embedded Runge-Kutta pair (DOP853).

Events are located by bracketing a sign change on a piece, ``brentq``
refinement and a Newton polish using the vector field, so event times are
smooth functions of the initial data (finite differences rely on this).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import DOP853, solve_ivp
from scipy.optimize import brentq

from .errors import ExtensionExceeded, InvalidParameters, NoSectionCrossing, TangentCrossing
from .model import HybridSystem, ParamPoint, TWO_PI, osc_flow, wrap_phase

# Samples per forcing period used to bracket events on exact pieces.
SAMPLES_PER_PERIOD = 64


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    event_tol: float = 1e-13
    max_step: float = 0.25
    max_period_multiples: float = 3.0
    fd_step: float = 1e-6
    fd_step2: float = 1e-4
    tangent_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "event_tol", "max_step",
                     "max_period_multiples", "fd_step", "fd_step2"):
            if not getattr(self, name) > 0:
                raise InvalidParameters(f"IntegratorConfig.{name} must be positive")


@dataclass(frozen=True)
class SectionWindow:
    """Optional rectangle of the plane ``y = 0`` that counts as the section."""

    z_center: float
    x_half: float = 0.1
    z_half: float = 1.0

    def contains(self, x, z) -> bool:
        dz = (z - self.z_center + math.pi) % TWO_PI - math.pi
        return abs(x) <= self.x_half and abs(dz) <= self.z_half


class Trajectory:
    """Extended flow through ``(x0, y0, z0)`` in time direction ``direction``."""

    def __init__(self, sys: HybridSystem, pp: ParamPoint, cfg: IntegratorConfig,
                 x0, y0, z0, direction=1):
        if direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        self.sys, self.pp, self.cfg = sys, pp, cfg
        self.x0, self.y0, self.z0 = float(x0), float(y0), float(z0)
        self.direction = direction
        self.omega = sys.omega(pp)
        self.period = TWO_PI / self.omega
        self.horizon = cfg.max_period_multiples * self.period
        if sys.closed_form:
            self._prm = sys.osc_params(pp)
            self._t0 = self.z0 / self.omega

    def phase(self, s):
        return self.z0 + self.direction * self.omega * s

    def accel(self, x, y, s):
        return self.sys.accel(x, y, self.phase(s), self.pp)

    def _exact(self, s):
        return osc_flow(self.x0, self.y0, self._t0, self._t0 + self.direction * s, self._prm)

    def pieces(self):
        if self.sys.closed_form:
            yield from self._exact_pieces()
        else:
            yield from self._integrated_pieces()

    def exact_chunks(self):
        """Sampled exact solution ``(s, x, y)`` in arrays of one forcing period each."""
        dt = min(self.period / SAMPLES_PER_PERIOD, self.cfg.max_step)
        n = int(math.ceil(self.horizon / dt))
        chunk = SAMPLES_PER_PERIOD
        for start in range(0, n, chunk):
            s = dt * np.arange(start, min(start + chunk, n) + 1)
            xs, ys = self._exact(s)
            yield s, xs, ys

    def exact_piece(self, s, xs, ys, i):
        return Piece(s[i], s[i + 1], self._exact, (xs[i], ys[i]), (xs[i + 1], ys[i + 1]))

    def _exact_pieces(self):
        for s, xs, ys in self.exact_chunks():
            for i in range(len(s) - 1):
                yield self.exact_piece(s, xs, ys, i)

    def _integrated_pieces(self):
        sys, pp, d = self.sys, self.pp, self.direction
        omega, z0 = self.omega, self.z0

        def rhs(t, u):
            return [u[1], sys.field(u[0], u[1], z0 + omega * t, pp.mu, pp.eta)]

        solver = DOP853(rhs, 0.0, [self.x0, self.y0], d * self.horizon,
                        rtol=self.cfg.rel_tol, atol=self.cfg.abs_tol,
                        max_step=self.cfg.max_step)
        halfwidth = sys.extension_halfwidth
        t_old, u_old = 0.0, (self.x0, self.y0)
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise NoSectionCrossing(f"integration failed: {msg}")
            dense = solver.dense_output()

            def evaluate(s, dense=dense):
                u = dense(d * np.asarray(s, dtype=float))
                return (float(u[0]), float(u[1])) if u.ndim == 1 else (u[0], u[1])

            u_new = (float(solver.y[0]), float(solver.y[1]))
            if abs(u_new[0]) > halfwidth:
                raise ExtensionExceeded(
                    f"|x| = {abs(u_new[0]):.3g} exceeds extension half-width {halfwidth}")
            yield Piece(abs(t_old), abs(solver.t), evaluate, u_old, u_new)
            t_old, u_old = solver.t, u_new

    def state_at(self, s):
        if self.sys.closed_form:
            return self._exact(s)
        raise NotImplementedError("use the evaluate() of the piece containing s")

    def propagator(self, s) -> np.ndarray:
        """``d(x, y)(s) / d(x0, y0)`` at fixed initial phase, for elapsed time ``s``."""
        t = self.direction * s
        if self.sys.closed_form:
            zeta = self._prm.zeta
            w1 = self._prm.omega1
            e = math.exp(-zeta * t)
            c, sn = math.cos(w1 * t), math.sin(w1 * t)
            return e * np.array([[c + zeta / w1 * sn, sn / w1],
                                 [-sn / w1, c - zeta / w1 * sn]])
        if t == 0.0:
            return np.eye(2)
        sys, pp, omega, z0 = self.sys, self.pp, self.omega, self.z0
        h = 1e-7

        def rhs(tt, u):
            x, y = u[0], u[1]
            z = z0 + omega * tt
            f = sys.field(x, y, z, pp.mu, pp.eta)
            fx = (sys.field(x + h, y, z, pp.mu, pp.eta) - sys.field(x - h, y, z, pp.mu, pp.eta)) / (2 * h)
            fy = (sys.field(x, y + h, z, pp.mu, pp.eta) - sys.field(x, y - h, z, pp.mu, pp.eta)) / (2 * h)
            m = u[2:].reshape(2, 2)
            dm = np.array([[0.0, 1.0], [fx, fy]]) @ m
            return np.concatenate([[y, f], dm.ravel()])

        sol = solve_ivp(rhs, (0.0, t), np.array([self.x0, self.y0, 1.0, 0.0, 0.0, 1.0]),
                        method="DOP853", rtol=self.cfg.rel_tol, atol=self.cfg.abs_tol,
                        max_step=self.cfg.max_step)
        if not sol.success:
            raise NoSectionCrossing(f"variational integration failed: {sol.message}")
        return sol.y[2:, -1].reshape(2, 2)

    def section_jacobian(self, crossing) -> np.ndarray:
        """Derivative of ``(x, z)`` at a section crossing w.r.t. the start ``(x0, y0, z0)``.

        Uses the propagator and the invariance ``Dphi f(u0) = f(phi(u0))``, with the
        crossing time eliminated through the constraint ``y = 0``.
        """
        m = self.propagator(crossing.s)
        f_in = np.array([self.y0, self.sys.accel(self.x0, self.y0, self.z0, self.pp)])
        f_out = np.array([crossing.y, crossing.accel])
        col_z = (f_out - m @ f_in) / self.omega
        full = np.column_stack([m, col_z])
        dt = -full[1] / crossing.accel
        row_x = full[0] + crossing.y * dt
        row_z = np.array([0.0, 0.0, 1.0]) + self.omega * dt
        return np.vstack([row_x, row_z])


@dataclass
class Piece:
    s_a: float
    s_b: float
    evaluate: object
    start: tuple
    end: tuple


def _polish(traj: Trajectory, evaluate, s, comp, sign):
    """Two Newton steps on ``sign * u[comp](s) = 0`` using the vector field."""
    d = traj.direction
    for _ in range(2):
        x, y = evaluate(s)
        f = sign * (y if comp == 1 else x)
        if f == 0.0:
            break
        dfdt = traj.accel(x, y, s) if comp == 1 else y
        dfds = sign * d * dfdt
        if dfds == 0.0:
            break
        step = f / dfds
        if abs(step) > 1e-6 * max(1.0, abs(s)):
            break
        s_new = s - step
        x2, y2 = evaluate(s_new)
        f2 = sign * (y2 if comp == 1 else x2)
        if abs(f2) >= abs(f):
            break
        s = s_new
    return s


def _refine(traj, piece, comp, sign, s_a, s_b):
    def g(s):
        u = piece.evaluate(s)
        return sign * u[comp]

    ga, gb = g(s_a), g(s_b)
    if ga == 0.0:
        s = s_a
    elif gb == 0.0:
        s = s_b
    else:
        s = brentq(g, s_a, s_b, xtol=min(traj.cfg.event_tol, 1e-12), rtol=4 * np.finfo(float).eps)
    return _polish(traj, piece.evaluate, s, comp, sign)


@dataclass(frozen=True)
class Crossing:
    s: float          # elapsed time (non-negative)
    x: float
    y: float
    z: float          # unwrapped phase
    accel: float


def section_crossing(traj: Trajectory, window: SectionWindow | None = None) -> Crossing:
    """First crossing of ``y = 0`` with ``F < 0`` (a local maximum of ``x``).

    The starting point itself is never reported, even if it lies on the
    section.  Crossings outside ``window`` are skipped.
    """
    d = traj.direction
    for piece in traj.pieces():
        ga, gb = d * piece.start[1], d * piece.end[1]
        if not (ga > 0.0 and gb <= 0.0):
            continue
        s = _refine(traj, piece, 1, d, piece.s_a, piece.s_b)
        x, y = piece.evaluate(s)
        f = traj.accel(x, y, s)
        if abs(f) < traj.cfg.tangent_tol:
            raise TangentCrossing(f"near-tangent section crossing (F = {f:.3g})")
        if f >= 0.0:
            continue
        z = traj.phase(s)
        if window is not None and not window.contains(x, z):
            continue
        return Crossing(s, x, y, z, f)
    raise NoSectionCrossing(
        f"no section crossing within {traj.cfg.max_period_multiples} forcing periods")


def surface_crossing(traj: Trajectory, rising: bool) -> Crossing:
    """First time ``x`` reaches 0: from below if ``rising`` else from above.

    Pieces are split at extrema of ``x`` so that a touch-and-return within
    one sampling interval is not missed.
    """
    sign = -1.0 if rising else 1.0     # g = sign * x goes from > 0 to <= 0
    for piece in traj.pieces():
        cuts = [piece.s_a]
        ya, yb = piece.start[1], piece.end[1]
        if ya * yb < 0.0:
            cuts.append(_refine(traj, piece, 1, 1.0 if ya > 0 else -1.0, piece.s_a, piece.s_b))
        cuts.append(piece.s_b)
        for s_a, s_b in zip(cuts[:-1], cuts[1:]):
            if s_b <= s_a:
                continue
            xa = piece.evaluate(s_a)[0]
            xb = piece.evaluate(s_b)[0]
            if sign * xa > 0.0 and sign * xb <= 0.0:
                s = _refine(traj, piece, 0, sign, s_a, s_b)
                x, y = piece.evaluate(s)
                return Crossing(s, x, y, traj.phase(s), traj.accel(x, y, s))
    raise NoSectionCrossing("impacting surface not reached within the integration horizon")


def unwrap_near(z, ref):
    """Shift ``z`` by a multiple of 2*pi to lie within pi of ``ref``."""
    return z - TWO_PI * round((z - ref) / TWO_PI)


__all__ = [
    "IntegratorConfig", "SectionWindow", "Trajectory", "Crossing",
    "section_crossing", "surface_crossing", "unwrap_near", "wrap_phase",
]
