"""Brute-force simulation of the hybrid system with impacts, orbit diagrams and
attractor classification.

A *return* is one loop of the motion: either a local maximum of ``x`` (an
ordinary crossing of the section) or an impact.  For an impact the recorded
value is the virtual maximum ``P_virt(y_imp, z_imp) > 0``, which is how
impacting loops show up above the wall in an orbit diagram.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ChatterStall, InvalidParameters
from .flow import IntegratorConfig, Trajectory, _refine
from .maps import DEFAULT_CONFIG, ImpactPoint, p_virt
from .model import TWO_PI, ImpactOscillator, ParamPoint, State, reset, wrap_phase

DEFAULT_SEED = 0x5EED
MAX_IMPACTS_PER_PERIOD = 10_000
PERIOD_TOL = 1e-6
MAX_PERIOD = 64


@dataclass(frozen=True)
class ScanConfig:
    n_initial: int = 8
    n_transient: int = 500
    n_record: int = 100
    seed: int = DEFAULT_SEED
    box: tuple = ((-2.0, 0.0), (-1.0, 1.0), (0.0, TWO_PI))

    def __post_init__(self):
        if min(self.n_initial, self.n_transient + 1, self.n_record) < 1:
            raise InvalidParameters("ScanConfig counts must be positive")
        if self.box[0][1] > 0.0:
            raise InvalidParameters("sampling box must satisfy x <= 0")


@dataclass(frozen=True)
class Return:
    x: float              # section value (virtual maximum if impacted)
    z: float              # wrapped phase of the maximum or of the impact
    impacted: bool
    y_imp: float = 0.0


@dataclass
class SimResult:
    returns: list = field(default_factory=list)
    impacts: list = field(default_factory=list)     # (time, y_imp, z_imp)
    grazings: list = field(default_factory=list)    # (time, z)
    final: State | None = None
    time: float = 0.0


def simulate_hybrid(s0: State, duration, sys, pp: ParamPoint, cfg: IntegratorConfig = DEFAULT_CONFIG,
                    max_returns=None, max_impacts_per_period=MAX_IMPACTS_PER_PERIOD) -> SimResult:
    """Integrate with resets for ``duration`` forcing periods (or ``max_returns`` returns).

    Arrivals at ``x = 0`` with ``|y| < cfg.event_tol`` are recorded as grazing
    events and the flow continues without a reset.
    """
    if s0.x > 0.0:
        raise InvalidParameters("initial state must satisfy x <= 0")
    omega = sys.omega(pp)
    period = TWO_PI / omega
    t_end = duration * period
    out = SimResult()
    x, y, z = s0.x, s0.y, s0.z
    t = 0.0
    window_start, window_count = 0.0, 0
    while t < t_end and (max_returns is None or len(out.returns) < max_returns):
        traj = Trajectory(sys, pp, cfg, x, y, z, 1)
        event, last_piece = None, None
        for piece in _candidate_pieces(traj):
            if t + piece.s_a >= t_end:
                break
            event = _first_event(traj, piece)
            if event is not None:
                break
            last_piece = piece
        if event is None:
            # horizon exhausted (or end of run): restart from the last piece end
            s = t_end - t if last_piece is None else min(last_piece.s_b, t_end - t)
            x, y = traj.state_at(s) if sys.closed_form else last_piece.evaluate(s)
            z, t = traj.phase(s), t + s
            continue
        kind, s, ex, ey = event
        t += s
        z_ev = traj.phase(s)
        if kind == "max":
            out.returns.append(Return(ex, wrap_phase(z_ev), False))
            x, y, z = ex, ey, z_ev
            # nudge past the section so the same maximum is not found again
            x, y, z = _advance(sys, pp, cfg, x, y, z, 1e-9 * period)
            t += 1e-9 * period
            continue
        if abs(ey) < cfg.event_tol:
            out.grazings.append((t, wrap_phase(z_ev)))
            x, y, z = _advance(sys, pp, cfg, 0.0, ey, z_ev, 1e-9 * period)
            t += 1e-9 * period
            continue
        virt = p_virt(ImpactPoint(ey, z_ev), sys, pp, cfg)
        out.returns.append(Return(virt.x, wrap_phase(z_ev), True, ey))
        out.impacts.append((t, ey, wrap_phase(z_ev)))
        if t - window_start > period:
            window_start, window_count = t, 0
        window_count += 1
        if window_count > max_impacts_per_period:
            raise ChatterStall(f"more than {max_impacts_per_period} impacts in one forcing period")
        y_new, z_new = reset(ey, z_ev, sys, pp, wrap=False)
        x, y, z = 0.0, y_new, z_new
    out.final = State(x, y, wrap_phase(z))
    out.time = t / period
    return out


def _advance(sys, pp, cfg, x, y, z, dt):
    traj = Trajectory(sys, pp, cfg, x, y, z, 1)
    if sys.closed_form:
        xs, ys = traj.state_at(dt)
        return xs, ys, traj.phase(dt)
    piece = next(iter(traj.pieces()))
    xs, ys = piece.evaluate(min(dt, piece.s_b))
    return xs, ys, traj.phase(dt)


def _candidate_pieces(traj):
    """Pieces of the trajectory that may contain an event, plus the final piece.

    For the closed-form flow the search runs on whole sampled periods at once.
    """
    if not traj.sys.closed_form:
        yield from traj.pieces()
        return
    last = None
    for s, xs, ys in traj.exact_chunks():
        hit = ((ys[:-1] > 0.0) & (ys[1:] <= 0.0)) | ((xs[:-1] < 0.0) & (xs[1:] >= 0.0))
        for i in np.flatnonzero(hit):
            yield traj.exact_piece(s, xs, ys, i)
        last = traj.exact_piece(s, xs, ys, len(s) - 2)
    if last is not None:
        yield last


def _first_event(traj, piece):
    """Earliest of: a maximum of ``x`` with ``F < 0``, an arrival at ``x = 0`` from below."""
    best = None
    (_, ya), (_, yb) = piece.start, piece.end
    if ya > 0.0 and yb <= 0.0:
        s = _refine(traj, piece, 1, 1.0, piece.s_a, piece.s_b)
        mx, my = piece.evaluate(s)
        if traj.accel(mx, my, s) < 0.0:
            best = ("max", s, mx, my)
    # arrival at the wall; split at the maximum so a touch inside the piece is seen
    cuts = [piece.s_a]
    if ya > 0.0 and yb <= 0.0:
        cuts.append(_refine(traj, piece, 1, 1.0, piece.s_a, piece.s_b))
    cuts.append(piece.s_b)
    for s_a, s_b in zip(cuts[:-1], cuts[1:]):
        if s_b <= s_a:
            continue
        x_a = piece.evaluate(s_a)[0]
        x_b = piece.evaluate(s_b)[0]
        if x_a < 0.0 <= x_b:
            s = _refine(traj, piece, 0, -1.0, s_a, s_b)
            ix, iy = piece.evaluate(s)
            if best is None or s <= best[1]:
                best = ("impact", s, 0.0, iy)
            break
    return best


# -- classification ------------------------------------------------------------------

@dataclass(frozen=True)
class AttractorSummary:
    kind: str                   # "periodic" | "aperiodic"
    period: int | None          # q, in returns
    impacts_per_period: int | None
    section_values: tuple
    impact_flags: tuple

    @property
    def label(self) -> str:
        if self.kind == "periodic":
            return f"periodic(q={self.period}, m={self.impacts_per_period})"
        return "aperiodic"


def classify(returns, tol=PERIOD_TOL, max_period=MAX_PERIOD) -> AttractorSummary:
    """Smallest ``q <= max_period`` with ``(x, z)`` repeating every ``q`` returns within ``tol``."""
    xs = np.array([r.x for r in returns])
    zs = np.array([r.z for r in returns])
    flags = tuple(bool(r.impacted) for r in returns)
    n = len(xs)
    for q in range(1, min(max_period, n - 1) + 1):
        dx = np.abs(xs[q:] - xs[:-q])
        dz = np.abs((zs[q:] - zs[:-q] + math.pi) % TWO_PI - math.pi)
        if np.all(dx < tol) and np.all(dz < tol):
            m = sum(flags[-q:])
            return AttractorSummary("periodic", q, m, tuple(xs), flags)
    return AttractorSummary("aperiodic", None, None, tuple(xs), flags)


def random_states(sc: ScanConfig, stream: int):
    """Initial states for one grid point, from an RNG keyed on ``(seed, stream)``."""
    rng = np.random.default_rng([sc.seed, stream])
    (x0, x1), (y0, y1), (z0, z1) = sc.box
    pts = rng.uniform([x0, y0, z0], [x1, y1, z1], size=(sc.n_initial, 3))
    return [State(*map(float, p)) for p in pts]


@dataclass
class DiagramPoint:
    amp: float
    summaries: list
    x_values: list
    impacted: list


def _run_one(sys, pp, cfg, sc, s0):
    res = simulate_hybrid(s0, math.inf, sys, pp, cfg, max_returns=sc.n_transient + sc.n_record)
    return classify(res.returns[sc.n_transient:])


def orbit_diagram(omega, amp_grid, sc: ScanConfig, sys: ImpactOscillator, cfg=DEFAULT_CONFIG,
                  threads=1):
    """Attractors reached from random starts at each amplitude of ``amp_grid``.

    Work is keyed by (grid index, start index), so output does not depend on
    ``threads``.
    """
    sys = sys.with_reference(omega) if abs(sys.omega_ref - omega) > 0 else sys
    jobs = []
    for i, amp in enumerate(amp_grid):
        pp = sys.param_point(float(amp), omega)
        for s0 in random_states(sc, i):
            jobs.append((i, pp, s0))

    def work(job):
        i, pp, s0 = job
        return i, _run_one(sys, pp, cfg, sc, s0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    out = [DiagramPoint(float(a), [], [], []) for a in amp_grid]
    for i, summ in results:
        pt = out[i]
        pt.summaries.append(summ)
        pt.x_values.extend(summ.section_values)
        pt.impacted.extend(summ.impact_flags)
    return out


def write_diagram(path_csv, path_json, diagram, sc: ScanConfig, meta=None):
    with open(path_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["amp", "x_section", "impacted"])
        for pt in diagram:
            for x, f in zip(pt.x_values, pt.impacted):
                w.writerow([repr(pt.amp), repr(float(x)), int(f)])
    with open(path_json, "w") as fh:
        json.dump({"scan_config": asdict(sc), "seed": sc.seed,
                   "attractors": [{"amp": pt.amp, "classes": sorted({s.label for s in pt.summaries})}
                                  for pt in diagram],
                   **(meta or {})}, fh, indent=2)
