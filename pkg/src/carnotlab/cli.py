"""Batch command line: ``python -m carnotlab <command> --config run.ini``.

Commands: verify-geometry, verify-cutoffs, verify-testfns, sweep, fit,
report, classify.  Each writes CSV/JSON/SVG artifacts and ``manifest.json``
under ``--out``; the exit code is 0 only if every check passed.  Failures are
listed in ``failures.json``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time
from pathlib import Path

COMMANDS = ("verify-geometry", "verify-cutoffs", "verify-testfns", "sweep", "fit", "report", "classify")
THREADS_ENV = "CARNOTLAB_THREADS"


class UsageError(Exception):
    pass


def _set_threads(n):
    # must run before numpy spins up its pools
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _floats(text):
    return [float(eval_fraction(s)) for s in text.replace(";", ",").split(",") if s.strip()]


def eval_fraction(s):
    from fractions import Fraction

    return Fraction(s.strip())


def load_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is None:
        raise UsageError("--config is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path} not found")
    cfg.read(p)
    if not cfg.sections():
        raise UsageError(f"config file {path} has no sections")
    return cfg


def _config_dict(cfg):
    return {s: dict(cfg[s]) for s in cfg.sections()}


def _write_csv(path, rows):
    rows = list(rows)
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


class Stage:
    """Output directory, manifest and failure list for one command."""

    def __init__(self, args, cfg, name):
        from .experiments import RunManifest

        self.name = name
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.manifest = RunManifest(config=_config_dict(cfg), seed=args.seed)
        self.failures = []
        self.t0 = time.perf_counter()

    def emit(self, filename, rows=None, text=None):
        path = self.out / filename
        if rows is not None:
            _write_csv(path, rows)
        elif text is not None:
            path.write_text(text)
        self.manifest.add_output(path, self.name)
        return path

    def record_checks(self, checks):
        for c in checks:
            if not c.passed:
                self.failures.append(c.row())
        self.emit(f"{self.name}_checks.csv", [c.row() for c in checks])

    def finish(self) -> int:
        self.manifest.time_stage(self.name, time.perf_counter() - self.t0)
        if self.failures:
            (self.out / "failures.json").write_text(json.dumps(self.failures, indent=2))
            for f in self.failures:
                print(f"FAIL {f}", file=sys.stderr)
        self.manifest.write(self.out / "manifest.json")
        return 1 if self.failures else 0


def _algebra(args, cfg):
    from .stratified_group import load_algebra, preset

    name = args.preset or cfg.get("run", "preset", fallback=None)
    path = cfg.get("run", "algebra", fallback=None)
    if path:
        return load_algebra(path)
    if not name:
        raise UsageError("no preset given (use --preset or [run] preset)")
    return preset(name)


def cmd_verify_geometry(args, cfg):
    from .experiments import geometry_suite

    st = Stage(args, cfg, "geometry")
    alg = _algebra(args, cfg)
    sec = cfg["geometry"] if cfg.has_section("geometry") else {}
    checks = geometry_suite(alg, seed=args.seed, cases=int(sec.get("cases", 1000)),
                            mc_samples=int(float(sec.get("mc_samples", 0))))
    st.record_checks(checks)
    return st.finish()


def cmd_verify_cutoffs(args, cfg):
    from .experiments import cutoff_suite

    st = Stage(args, cfg, "cutoffs")
    alg = _algebra(args, cfg)
    sec = cfg["cutoffs"] if cfg.has_section("cutoffs") else {}
    radii = _floats(sec.get("radii", "4,8,16"))
    checks, rows = cutoff_suite(alg, radii)
    st.emit("cutoffs.csv", rows)
    st.record_checks(checks)
    return st.finish()


def cmd_verify_testfns(args, cfg):
    from .experiments import testfn_suite

    st = Stage(args, cfg, "testfns")
    alg = _algebra(args, cfg)
    sec = cfg["testfns"] if cfg.has_section("testfns") else {}
    checks, rows = testfn_suite(alg, _floats(sec.get("p_list", "3/2, 5/3")), _floats(sec.get("radii", "4,8,16")))
    st.emit("testfns.csv", rows)
    st.record_checks(checks)
    return st.finish()


def sweep_template(alg, sec):
    """Problem template from a ``[sweep]`` section (radial grid for Heisenberg presets)."""
    from .differential_ops import GridSpec
    from .radial import RadialGrid
    from .semilinear import ProblemSpec, default_bump

    kind = sec.get("kind", "parabolic")
    p = float(eval_fraction(sec.get("p", "1.3")))
    if alg.name.startswith("heisenberg-"):
        nr, nt = int(sec.get("nr", 128)), int(sec.get("nt", 512))
        r_max = float(sec.get("r_max", 8.0))
        ratio = float(sec.get("aspect", 0.1))
        grid = RadialGrid(alg.horizontal_dim // 2, nr, r_max / nr, nt, 2 * ratio * r_max**2 / nt)
    else:
        grid = GridSpec.graded(alg, float(sec.get("extent", 4.0)), int(sec.get("half_nodes", 16)))
    bump = default_bump(alg, grid)
    zero = 0.0 * bump
    u0, u1 = (bump, None) if kind == "parabolic" else (zero, bump)
    return ProblemSpec(kind, alg, grid, p, u0, 1.0, float(sec.get("horizon", 1e9)), u1=u1)


def cmd_sweep(args, cfg):
    from .semilinear import lifespan_sweep, write_sweep_csv

    if not cfg.has_section("sweep"):
        raise UsageError("sweep needs a [sweep] section")
    st = Stage(args, cfg, "sweep")
    alg = _algebra(args, cfg)
    sec = cfg["sweep"]
    amps = _floats(sec.get("amplitudes", ""))
    if len(amps) < 1:
        raise UsageError("[sweep] amplitudes is empty")
    out = lifespan_sweep(sweep_template(alg, sec), amps)
    path = st.out / sec.get("file", "sweep.csv")
    write_sweep_csv(path, out["records"])
    st.manifest.add_output(path, "sweep")
    from .experiments import Check

    checks = [Check("sweep_monotone", float(out["monotone"]), 1.0, out["monotone"]),
              Check("sweep_uncontaminated", float(not out["contaminated"]), 1.0, not out["contaminated"])]
    st.record_checks(checks)
    return st.finish()


def _sweep_path(args, cfg):
    sec = cfg["sweep"] if cfg.has_section("sweep") else {}
    return Path(args.out) / sec.get("file", "sweep.csv")


def cmd_fit(args, cfg):
    from .experiments import Check
    from .semilinear import fit_lifespan_exponent, read_sweep_csv

    st = Stage(args, cfg, "fit")
    alg = _algebra(args, cfg)
    records = read_sweep_csv(_sweep_path(args, cfg))
    fit = fit_lifespan_exponent(records, alg)
    st.emit("fit.json", text=json.dumps(fit, indent=2, sort_keys=True))
    sec = cfg["fit"] if cfg.has_section("fit") else {}
    tol = float(sec.get("slope_tolerance", 0.2))
    ref = fit["theory"]["sharp"]
    ok = abs(fit["slope"] - ref) <= tol * abs(ref)
    st.record_checks([Check("slope_vs_sharp", fit["slope"], ref, ok, f"tolerance {tol:.0%}")])
    return st.finish()


def cmd_report(args, cfg):
    from .experiments import emit_plots

    st = Stage(args, cfg, "report")
    alg = _algebra(args, cfg)
    info = emit_plots(_sweep_path(args, cfg), st.out / "lifespan.svg", alg)
    st.manifest.add_output(st.out / "lifespan.svg", "report")
    st.emit("report.json", text=json.dumps({k: v for k, v in info.items() if k != "path"}, indent=2, sort_keys=True))
    return st.finish()


def cmd_classify(args, cfg):
    from .experiments import classify

    st = Stage(args, cfg, "classify")
    alg = _algebra(args, cfg)
    sec = cfg["classify"] if cfg.has_section("classify") else {}
    rows = []
    for p in sec.get("p_list", "3/2").split(","):
        table = classify(alg, p.strip())
        rows += list(table.rows())
    st.emit("regimes.csv", rows)
    for r in rows:
        print(f"{r['equation']:<12} {r['variant']:<6} threshold {r['threshold']:<6} p={r['p']:<6} {r['regime']}")
    return st.finish()


HANDLERS = {
    "verify-geometry": cmd_verify_geometry,
    "verify-cutoffs": cmd_verify_cutoffs,
    "verify-testfns": cmd_verify_testfns,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "report": cmd_report,
    "classify": cmd_classify,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="carnotlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI run configuration")
    ap.add_argument("--out", default="carnotlab-out", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None, help=f"worker threads (default: ${THREADS_ENV})")
    ap.add_argument("--preset", default=None, help="group preset, e.g. heisenberg-1")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _set_threads(args.threads or os.environ.get(THREADS_ENV))
    try:
        cfg = load_config(args.config)
        return HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        (Path(args.out) / "failures.json").write_text(json.dumps([record], indent=2))
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
