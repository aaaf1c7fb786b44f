"""The ``grazing`` command.

Exit codes: 0 success, 1 a ``verify`` check failed, 2 bad arguments or
config, 3 precondition not met, 4 numerical failure (partial output kept).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys as _sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunManifest, Stopwatch, integrator_config, oscillator, parse_decimal, resolve
from .errors import DomainError, GrazingError, InvalidParameters, NumericalFailure

log = logging.getLogger("grazing")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def decimal_arg(text):
    try:
        return parse_decimal(text)
    except InvalidParameters as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be >= 1")
    return v


# -- helpers -------------------------------------------------------------------------

class Run:
    """Resolved configuration, output directory and manifest bookkeeping for one command."""

    def __init__(self, args, name):
        self.args = args
        self.name = name
        self.clock = Stopwatch()
        try:
            self.config = resolve(args.config, {"zeta": args.zeta, "epsilon": args.epsilon,
                                                "omega": getattr(args, "omega", None),
                                                "amp": getattr(args, "amp", None)})
            self.cfg = integrator_config(self.config)
        except InvalidParameters as exc:
            raise UsageError(str(exc)) from exc
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.warnings = []
        if self.config["epsilon"] == 1.0:
            self.warnings.append("epsilon = 1: no energy loss at impact; some coefficient "
                                 "formulas degenerate when epsilon * E_p = 1")

    def path(self, name) -> Path:
        p = self.out / name
        self.outputs.append(str(p.resolve()))
        return p

    def write_json(self, name, data):
        self.path(name).write_text(_dumps(data))

    def finish(self):
        argv = getattr(self.args, "argv", None)
        manifest = RunManifest(self.name, self.config, list(self.outputs), self.clock.elapsed(),
                               args={"argv": argv, "warnings": self.warnings})
        manifest.write(self.out / f"manifest_{self.name}.json")


def _plain(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "__dataclass_fields__"):
        from dataclasses import asdict
        return asdict(obj)
    return str(obj)


def _finite(obj):
    """Replace NaN and infinities by ``None`` so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dumps(data):
    return json.dumps(_finite(json.loads(json.dumps(data, default=_plain))), indent=2,
                      allow_nan=False)


def _emit(data):
    print(_dumps(data))


def _need(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required (flag or config file)")
    return value


# -- commands ------------------------------------------------------------------------

def cmd_theory(args):
    from .continuation import numeric_resonant_coeffs
    from .theory import resonance_frequency, resonant_coeffs_osc

    run = Run(args, "theory")
    zeta, eps = run.config["zeta"], run.config["epsilon"]
    if args.omega is not None or args.method == "numeric":
        omega = args.omega if args.omega is not None else resonance_frequency(args.p, args.n, zeta)
        sys = oscillator(run.config, omega_ref=omega)
        cs = numeric_resonant_coeffs(args.p, sys, run.cfg)
    else:
        cs = resonant_coeffs_osc(args.p, args.n, zeta, eps)
    values = cs.to_dict()
    prov = values.pop("provenance")
    doc = {"p": args.p, "n": args.n, "zeta": zeta, "epsilon": eps, "coeffs": values,
           "provenance": prov, "warnings": run.warnings}
    run.write_json(f"theory_p{args.p}_n{args.n}.json", doc)
    run.finish()
    _emit(doc)
    return EXIT_OK


def cmd_curves(args):
    from .continuation import (continue_curve, find_resonant_grazing, fit_quadratic,
                               grazing_curve, write_curve_csv, write_curve_metadata)

    run = Run(args, "curves")
    window = None
    if args.omega_min is not None or args.omega_max is not None:
        window = (args.omega_min if args.omega_min is not None else 0.0,
                  args.omega_max if args.omega_max is not None else math.inf)
    if args.kind == "GZ":
        lo, hi = window if window is not None else (0.3, 1.0)
        hi = 1.0 if math.isinf(hi) else hi
        grid = np.linspace(lo, hi, args.points)
        sys = oscillator(run.config, omega_ref=float(grid[0]))
        curve = grazing_curve(sys, grid, run.cfg, generic=args.generic)
        write_curve_csv(run.path("curve_GZ.csv"), curve, sys)
        run.finish()
        _emit({"kind": "GZ", "n_points": len(curve.points)})
        return EXIT_OK

    p, n = _need(args.p, "--p"), _need(args.n, "--n")
    sys = oscillator(run.config)
    rg = find_resonant_grazing(p, n, sys, run.cfg, omega_window=window, eta_seed=args.eta_seed)
    kinds = ["SN", "PD"] if args.kind == "both" else [args.kind]
    eta_window = (-args.eta_window, args.eta_window)

    def one(kind):
        seed = rg.sn_seed if kind == "SN" else rg.pd_seed
        try:
            return kind, continue_curve(kind, p, seed, rg.sys, run.cfg, eta_window=eta_window), None
        except NumericalFailure as exc:
            return kind, None, (exc, seed)

    with ThreadPoolExecutor(max_workers=max(1, min(args.threads, len(kinds)))) as pool:
        results = list(pool.map(one, kinds))

    report = {"p": p, "n": n, "omega_star": rg.omega_star, "curves": {}}
    failed = None
    for kind, curve, err in results:
        pred = rg.coeffs.c_sn if kind == "SN" else rg.coeffs.c_pd
        stem = f"curve_{kind}_p{p}_n{n}"
        if curve is None:
            from .continuation import CurvePoint, CurveSample
            exc, seed = err
            partial = CurveSample(kind, p, [CurvePoint(seed.params.mu, seed.params.eta,
                                                       seed.impact.y_imp, seed.impact.z_imp,
                                                       seed.refinement_residual)],
                                  f"failed: {exc}")
            write_curve_csv(run.path(stem + ".csv"), partial, rg.sys)
            report["curves"][kind] = {"error": str(exc), "predicted": pred}
            failed = exc
            continue
        entry = {"n_points": len(curve.points), "predicted": pred, "stop_reason": curve.stop_reason,
                 "mu_sign": int(np.sign(np.median(curve.mu)))}
        try:
            c, se, used = fit_quadratic(curve, eta_fit=args.eta_fit)
            entry.update(fitted=c, std_err=se, n_fit=used, rel_deviation=(c - pred) / abs(pred))
        except NumericalFailure as exc:
            entry["fit_error"] = str(exc)
        write_curve_csv(run.path(stem + ".csv"), curve, rg.sys)
        write_curve_metadata(run.path(stem + ".json"), curve,
                             {"config": run.config, "omega_star": rg.omega_star,
                              "eta_seed": args.eta_seed, "fit": entry})
        report["curves"][kind] = entry
    run.finish()
    _emit(report)
    if failed is not None:
        raise failed
    return EXIT_OK


BRANCH_HEADER = ["p", "amp", "omega", "mu", "y_imp", "z_imp", "trace_T", "det_D", "stable",
                 "admissible"]


def _write_branch(path, samples, sys):
    from .model import wrap_phase
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BRANCH_HEADER)
        for smp in samples:
            s = smp.sol
            amp, omega = sys.physical(s.params)
            st = s.stability
            w.writerow([s.p, repr(amp), repr(omega), repr(s.params.mu), repr(s.impact.y_imp),
                        repr(wrap_phase(s.impact.z_imp)),
                        "" if st is None else repr(st.trace_T), "" if st is None else repr(st.det_D),
                        "" if st is None else int(st.stable), int(s.admissible.admissible)])


def cmd_branch(args):
    from .continuation import branch_from_grazing

    run = Run(args, "branch")
    omega = run.config.get("omega", 0.854)
    sys = oscillator(run.config, omega_ref=omega)

    def one(p):
        try:
            s, e = branch_from_grazing(p, sys, 0.0, args.mu_span, run.cfg, relabel=not args.no_relabel)
            return p, s, e, None
        except NumericalFailure as exc:
            s, e = exc.partial if exc.partial else ([], [])
            return p, s, e, exc

    with ThreadPoolExecutor(max_workers=max(1, min(args.threads, len(args.p)))) as pool:
        results = list(pool.map(one, args.p))

    report, failed = {"omega": omega, "branches": {}}, None
    for p, samples, events, err in results:
        _write_branch(run.path(f"branch_p{p}.csv"), samples, sys)
        evs = [e.to_dict(sys) for e in events]
        run.write_json(f"events_p{p}.json", evs)
        report["branches"][str(p)] = {"n_samples": len(samples), "events": evs,
                                      "error": None if err is None else str(err)}
        failed = failed or err
    run.finish()
    _emit(report)
    if failed is not None:
        raise failed
    return EXIT_OK


def cmd_mps(args):
    from .maps import ImpactPoint
    from .mps import linear_seed, solve_mps

    run = Run(args, "mps")
    amp = _need(run.config.get("amp"), "--amp")
    omega = _need(run.config.get("omega"), "--omega")
    sys = oscillator(run.config, omega_ref=omega)
    pp = sys.param_point(amp, omega)
    if args.y_guess is not None and args.z_guess is not None:
        guess = ImpactPoint(args.y_guess, args.z_guess)
    else:
        guess = linear_seed(args.p, pp, sys, run.cfg)
    sol = solve_mps(args.p, pp, guess, sys, run.cfg)
    doc = dict(sol.to_dict(), amp=amp, omega=omega)
    run.write_json(f"mps_p{args.p}.json", doc)
    run.finish()
    _emit(doc)
    return EXIT_OK


def cmd_scan(args):
    from .scan import DEFAULT_SEED, ScanConfig, orbit_diagram, write_diagram

    run = Run(args, "scan")
    omega = run.config.get("omega", 0.854)
    if args.amp_min is not None and args.amp_max is not None:
        grid = np.linspace(args.amp_min, args.amp_max, args.points)
    elif "amp" in run.config:
        grid = np.array([run.config["amp"]])
    else:
        raise UsageError("give --amp-min and --amp-max, or a single amp")
    sc = ScanConfig(n_initial=args.n_initial, n_transient=args.transient, n_record=args.record,
                    seed=DEFAULT_SEED if args.seed is None else args.seed)
    sys = oscillator(run.config, omega_ref=omega)
    diagram = orbit_diagram(omega, [float(a) for a in grid], sc, sys, run.cfg, threads=args.threads)
    write_diagram(run.path("scan.csv"), run.path("scan.json"), diagram, sc,
                  {"omega": omega, "config": run.config})
    run.finish()
    _emit([{"amp": pt.amp, "classes": sorted({s.label for s in pt.summaries})} for pt in diagram])
    return EXIT_OK


def cmd_verify(args):
    from .verification import format_row, run_checks

    run = Run(args, "verify")
    if args.manifest:
        rows = [_recheck_manifest(Path(m)) for m in args.manifest]
        for r in rows:
            print(format_row(r))
    else:
        rows = run_checks(fast=args.fast, progress=lambda r: print(format_row(r), flush=True))
    run.write_json("verify.json", [r.__dict__ for r in rows])
    run.finish()
    n_fail = sum(not r.passed for r in rows)
    print(f"{len(rows) - n_fail}/{len(rows)} checks passed")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK_FAILED


def _recheck_manifest(path: Path, rtol=1e-9):
    """Re-run the command recorded in a manifest and compare its output files."""
    from .verification import Check

    clock = Stopwatch()
    name = f"reproduce {path.name}"
    try:
        m = RunManifest.read(path)
        argv = list(m.args.get("argv") or [])
        if not argv:
            return Check(name, False, "manifest has no recorded argv")
        with tempfile.TemporaryDirectory() as tmp:
            code = main(_replace_out(argv, tmp), quiet=True)
            if code != EXIT_OK:
                return Check(name, False, f"re-run exited with {code}", clock.elapsed())
            worst = 0.0
            for out in m.outputs:
                old, new = Path(out), Path(tmp) / Path(out).name
                worst = max(worst, compare_files(old, new))
        ok = worst <= rtol
        return Check(name, ok, f"max relative difference {worst:.2e}", clock.elapsed())
    except Exception as exc:
        return Check(name, False, f"{type(exc).__name__}: {exc}", clock.elapsed())


def _replace_out(argv, out):
    argv = list(argv)
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            argv[i + 1] = out
            return argv
        if a.startswith("--out="):
            argv[i] = f"--out={out}"
            return argv
    return argv + ["--out", out]


def compare_files(a: Path, b: Path) -> float:
    """Largest relative difference between numeric entries of two CSV or JSON files."""
    if a.suffix == ".csv":
        ra = list(csv.reader(a.open()))
        rb = list(csv.reader(b.open()))
        if len(ra) != len(rb):
            return math.inf
        worst = 0.0
        for xa, xb in zip(ra, rb):
            if len(xa) != len(xb):
                return math.inf
            for u, v in zip(xa, xb):
                worst = max(worst, _cell_diff(u, v))
        return worst
    return _json_diff(json.loads(a.read_text()), json.loads(b.read_text()))


def _cell_diff(u, v):
    try:
        fu, fv = float(u), float(v)
    except ValueError:
        return 0.0 if u == v else math.inf
    if fu == fv or (math.isnan(fu) and math.isnan(fv)):
        return 0.0
    return abs(fu - fv) / max(abs(fu), abs(fv), 1e-300)


def _json_diff(x, y, key=None):
    if key in ("wall_time", "seconds", "outputs", "argv"):
        return 0.0
    if isinstance(x, dict) and isinstance(y, dict):
        if set(x) != set(y):
            return math.inf
        return max((_json_diff(x[k], y[k], k) for k in x), default=0.0)
    if isinstance(x, list) and isinstance(y, list):
        if len(x) != len(y):
            return math.inf
        return max((_json_diff(u, v) for u, v in zip(x, y)), default=0.0)
    if isinstance(x, (int, float)) and isinstance(y, (int, float)) and not isinstance(x, bool):
        return _cell_diff(x, y)
    return 0.0 if x == y else math.inf


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file (zeta, epsilon, amp, omega, tolerances)")
    common.add_argument("--out", default="grazing_out", help="output directory")
    common.add_argument("--threads", type=positive_int, default=1, help="worker cap")
    common.add_argument("--zeta", type=decimal_arg)
    common.add_argument("--epsilon", type=decimal_arg)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="grazing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", parents=[common], help="unfolding coefficients at a resonance")
    p.add_argument("--p", type=positive_int, required=True)
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--omega", type=decimal_arg,
                   help="evaluate numerically at this frequency (must be resonant)")
    p.add_argument("--method", choices=("closed-form", "numeric"), default="closed-form")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("curves", parents=[common], help="SN/PD curves near a resonance, or the grazing curve")
    p.add_argument("--p", type=positive_int)
    p.add_argument("--n", type=positive_int)
    p.add_argument("--kind", choices=("SN", "PD", "both", "GZ"), default="both")
    p.add_argument("--omega-min", type=decimal_arg)
    p.add_argument("--omega-max", type=decimal_arg)
    p.add_argument("--eta-window", type=decimal_arg, default=2.5e-3)
    p.add_argument("--eta-fit", type=decimal_arg, default=2e-3)
    p.add_argument("--eta-seed", type=decimal_arg, default=1e-3)
    p.add_argument("--points", type=positive_int, default=141, help="grid size for --kind GZ")
    p.add_argument("--generic", action="store_true", help="integrate instead of the closed form (GZ)")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("branch", parents=[common], help="MPS branches born at grazing")
    p.add_argument("--p", type=positive_int, nargs="+", required=True)
    p.add_argument("--omega", type=decimal_arg)
    p.add_argument("--mu-span", type=decimal_arg, default=0.1)
    p.add_argument("--no-relabel", action="store_true",
                   help="stop instead of switching to p+1 loops when a maximum is born")
    p.set_defaults(func=cmd_branch)

    p = sub.add_parser("mps", parents=[common], help="solve for one p-loop MPS")
    p.add_argument("--p", type=positive_int, required=True)
    p.add_argument("--amp", type=decimal_arg)
    p.add_argument("--omega", type=decimal_arg)
    p.add_argument("--y-guess", type=decimal_arg)
    p.add_argument("--z-guess", type=decimal_arg)
    p.set_defaults(func=cmd_mps)

    p = sub.add_parser("scan", parents=[common], help="orbit diagram by direct simulation")
    p.add_argument("--omega", type=decimal_arg)
    p.add_argument("--amp", type=decimal_arg)
    p.add_argument("--amp-min", type=decimal_arg)
    p.add_argument("--amp-max", type=decimal_arg)
    p.add_argument("--points", type=positive_int, default=21)
    p.add_argument("--n-initial", type=positive_int, default=8)
    p.add_argument("--transient", type=positive_int, default=500)
    p.add_argument("--record", type=positive_int, default=100)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("verify", parents=[common], help="closed-form vs numeric checks")
    p.add_argument("--fast", action="store_true")
    p.add_argument("--manifest", nargs="+", help="re-run these manifests and compare outputs")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None, quiet=False) -> int:
    argv = list(_sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if quiet:
            import contextlib
            import io
            with contextlib.redirect_stdout(io.StringIO()):
                return args.func(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(_sys.stderr)
        print(f"grazing: error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except InvalidParameters as exc:
        print(f"grazing: invalid parameters: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"grazing: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_DOMAIN
    except NumericalFailure as exc:
        print(f"grazing: {type(exc).__name__}: {exc} (partial output kept)", file=_sys.stderr)
        return EXIT_NUMERIC
    except GrazingError as exc:  # pragma: no cover - every subclass is one of the above
        print(f"grazing: {exc}", file=_sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
