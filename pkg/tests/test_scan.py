import math

import numpy as np
import pytest

from grazing.errors import ChatterStall, InvalidParameters
from grazing.maps import DEFAULT_CONFIG
from grazing.maps import locate_grazing
from grazing.model import ParamPoint, State, a_graz
from grazing.scan import (Return, ScanConfig, classify, orbit_diagram, random_states,
                          simulate_hybrid, write_diagram)

from conftest import OMEGA, ZETA

SMALL = ScanConfig(n_initial=3, n_transient=300, n_record=40)


def labels(point):
    return {s.label for s in point.summaries}


def test_below_grazing_no_impacts(osc):
    (pt,) = orbit_diagram(OMEGA, [0.26], SMALL, osc)
    assert labels(pt) == {"periodic(q=1, m=0)"}
    xs = np.array(pt.x_values)
    assert np.all(xs < 0) and not any(pt.impacted)
    assert np.ptp(xs) < 1e-6
    # the section value is the peak of the non-impacting periodic orbit
    assert xs[0] == pytest.approx(-1 + 0.26 / a_graz(OMEGA, ZETA), abs=1e-6)


@pytest.mark.parametrize("amp", [0.326, 0.33])
def test_stable_two_loop_window(osc, amp):
    (pt,) = orbit_diagram(OMEGA, [amp], SMALL, osc)
    assert labels(pt) == {"periodic(q=2, m=1)"}
    xs = np.array(pt.x_values)
    hi, lo = xs[xs > 0], xs[xs < 0]
    assert len(hi) and len(lo)
    assert np.ptp(hi) < 1e-6 and np.ptp(lo) < 1e-6
    assert all(np.array(pt.impacted) == (xs > 0))


def test_two_loop_window_starts_at_period_doubling(osc, branches):
    # below the period-doubling point the two-loop orbit is unstable, above it it is observed
    pd = a_graz(OMEGA, ZETA) + [e for e in branches[2][1] if e.kind == "PD"][0].params.mu
    below, above = orbit_diagram(OMEGA, [pd - 4e-3, pd + 2e-3], SMALL, osc)
    assert "periodic(q=2, m=1)" not in labels(below)
    assert labels(above) == {"periodic(q=2, m=1)"}


def test_same_seed_same_output(osc):
    grid = [0.3, 0.33]
    a = orbit_diagram(OMEGA, grid, SMALL, osc)
    b = orbit_diagram(OMEGA, grid, SMALL, osc, threads=2)
    for p, q in zip(a, b):
        assert p.x_values == q.x_values and p.impacted == q.impacted


def test_random_states_respect_box():
    sc = ScanConfig(n_initial=200, seed=7)
    pts = random_states(sc, 3)
    assert pts == random_states(sc, 3)
    assert pts != random_states(sc, 4)
    assert all(-2 <= s.x <= 0 and -1 <= s.y <= 1 and 0 <= s.z < 2 * math.pi for s in pts)


@pytest.mark.parametrize("kw", [dict(n_initial=0), dict(n_record=0), dict(box=((-1, 0.5), (0, 1), (0, 1)))])
def test_invalid_scan_config(kw):
    with pytest.raises(InvalidParameters):
        ScanConfig(**kw)


def test_start_inside_wall_is_rejected(osc):
    with pytest.raises(InvalidParameters):
        simulate_hybrid(State(0.1, 0.0, 0.0), 1, osc, ParamPoint())


def test_chatter_guard(osc):
    pp = osc.param_point(0.33, OMEGA)
    with pytest.raises(ChatterStall):
        simulate_hybrid(State(0.0, -0.5, 0.0), 20, osc, pp, max_impacts_per_period=0)


def test_grazing_arrivals_are_not_reset(osc):
    graz = locate_grazing(osc)
    run = simulate_hybrid(State(0.0, 0.0, graz.z_graz), 3, osc, ParamPoint(0.0, 0.0))
    assert run.grazings
    impact_times = {t for t, _, _ in run.impacts}
    assert not any(t in impact_times for t, _ in run.grazings)
    assert all(abs(y) >= DEFAULT_CONFIG.event_tol for _, y, _ in run.impacts)


def test_unforced_impacts_lose_energy(osc):
    # with no forcing, the energy at the wall is (1 + y^2)/2, so impact speeds must decrease
    pp = osc.param_point(0.0, OMEGA)
    rng = np.random.default_rng(1)
    for x0, y0, z0 in rng.uniform([-2, -1, 0], [0, 1, 2 * math.pi], size=(100, 3)):
        run = simulate_hybrid(State(x0, y0, z0), 5, osc, pp)
        speeds = [y for _, y, _ in run.impacts]
        assert all(b < a for a, b in zip(speeds, speeds[1:]))


def test_classify_detects_period_and_impacts():
    rets = [Return(0.1, 0.2, True, 0.3), Return(-0.4, 1.0, False)] * 10
    s = classify(rets)
    assert (s.kind, s.period, s.impacts_per_period) == ("periodic", 2, 1)
    rng = np.random.default_rng(0)
    noise = [Return(float(x), 0.0, False) for x in rng.uniform(-1, 0, 200)]
    assert classify(noise).kind == "aperiodic"


def test_classify_handles_phase_wrap():
    rets = [Return(-0.1, 2 * math.pi - 1e-9, False), Return(-0.1, 1e-9, False)] * 5
    assert classify(rets).period == 1


def test_diagram_files(tmp_path, osc):
    diagram = orbit_diagram(OMEGA, [0.26], ScanConfig(n_initial=1, n_transient=10, n_record=5), osc)
    write_diagram(tmp_path / "d.csv", tmp_path / "d.json", diagram, SMALL, {"omega": OMEGA})
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "amp,x_section,impacted" and len(rows) == 6
    import json
    meta = json.loads((tmp_path / "d.json").read_text())
    assert meta["seed"] == SMALL.seed and meta["omega"] == OMEGA
    assert meta["attractors"][0]["amp"] == 0.26 and len(meta["attractors"][0]["classes"]) == 1
