"""Acceptance checks, one per criterion, each reporting a ``CRITERION n`` line.

Run with ``pytest -v tests/test_acceptance.py``; the summary section at the
end of the session lists every line.  The lifespan sweeps (8 and 9) take
tens of minutes on one core.
"""
import math
import time
from fractions import Fraction

import numpy as np
import sympy

from carnotlab import heisenberg
from carnotlab.cli import sweep_template
from carnotlab.differential_ops import GridField, GridSpec, coordinate_symbols, fd_convergence_report, sub_laplacian_apply
from carnotlab.experiments import classify, cutoff_suite, geometry_suite, testfn_suite
from carnotlab.semigroup_cutoffs import good_cutoff
from carnotlab.semilinear import (
    ProblemSpec,
    fit_lifespan_exponent,
    lifespan_sweep,
    ode_blowup_time,
    solve,
    theoretical_exponents,
)
from carnotlab.stratified_group import ball_volume_mc, cd_parameters, random_step2, sphere_sweep_cd

H1, H2 = heisenberg(1), heisenberg(2)


def _fmt(checks):
    return ", ".join(f"{c.name}={c.value:.3g}" for c in checks)


def test_criterion_01_group_law(acceptance):
    t0 = time.perf_counter()
    failed, worst = [], 0.0
    for alg in (H1, H2, random_step2(3, 2, seed=11)):
        checks = [c for c in geometry_suite(alg, seed=1, cases=1000) if c.name != "cd_sphere_sweep"]
        worst = max(worst, max(c.value for c in checks))
        failed += [f"{alg.name}:{c.name}" for c in checks if not c.passed]
    dt = time.perf_counter() - t0
    ok = not failed and dt < 10
    acceptance(1, ok, f"max rel err {worst:.2e} (<= 1e-12) over 3 groups x 4 identities x 1000 cases; {dt:.1f}s {failed}")
    assert ok


def test_criterion_02_haar_scaling(acceptance):
    t0 = time.perf_counter()
    parts, ok = [], True
    for alg in (H1, H2):
        for k, R in enumerate((1.0, 2.0)):
            v1, s1 = ball_volume_mc(alg, R, 10**6, seed=10 * k + 1)
            v2, s2 = ball_volume_mc(alg, 2 * R, 10**6, seed=10 * k + 2)
            ratio = v2 / v1
            se = ratio * math.hypot(s1 / v1, s2 / v2)
            z = abs(ratio - 2**alg.hom_dim) / se
            ok &= z <= 3
            parts.append(f"{alg.name} R={R:g}: {ratio:.3f} vs {2**alg.hom_dim} ({z:.2f} se)")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    acceptance(2, ok, "; ".join(parts) + f"; {dt:.1f}s")
    assert ok


def test_criterion_03_cd_parameters(acceptance):
    t0 = time.perf_counter()
    c = cd_parameters(H1)
    exact = (c.rho2, c.kappa, c.d, c.bigD) == (0.5, 1.0, 2, 8.0)
    rho, kappa = sphere_sweep_cd(H1)
    err = max(abs(rho - c.rho2), abs(kappa - c.kappa))
    dt = time.perf_counter() - t0
    ok = exact and err <= 1e-9 and dt < 1
    acceptance(3, ok, f"(rho2, kappa, d, D) = ({c.rho2}, {c.kappa}, {c.d}, {c.bigD}); sphere sweep err {err:.1e}; {dt:.2f}s")
    assert ok


def test_criterion_04_discretization(acceptance):
    t0 = time.perf_counter()
    x, y, t = coordinate_symbols(H1)
    f = sympy.cos(x) * sympy.cos(y) * sympy.exp(-(t**2) / 4)
    centered = [GridSpec.uniform((n, n, 2 * n), (2.0 / n, 2.0 / n, 2.0 / n)) for n in (8, 16, 32)]
    flow = [GridSpec.uniform((n, n, n * n // 4), (2.0 / n, 2.0 / n, 8.0 / n**2)) for n in (8, 16, 32)]
    ratios = {s: fd_convergence_report(H1, f, specs, scheme=s)[-1]["ratio"]
              for s, specs in (("centered", centered), ("flow", flow))}
    spec = GridSpec.uniform((12, 12, 24), (0.25, 0.25, 0.125))
    bump = lambda p: np.exp(-2 * (p[..., 0] ** 2 + p[..., 1] ** 2) - p[..., 2] ** 2)
    u = GridField.from_function(spec, lambda p: bump(p) * (1 + p[..., 0]))
    v = GridField.from_function(spec, lambda p: bump(p - 0.3) * np.cos(p[..., 2]))
    sym = 0.0
    for s in ("centered", "flow"):
        a = (v.values * sub_laplacian_apply(H1, u, s).values).sum()
        b = (u.values * sub_laplacian_apply(H1, v, s).values).sum()
        sym = max(sym, abs(a - b) / max(abs(a), abs(b)))
    dt = time.perf_counter() - t0
    ok = all(3.5 <= r <= 4.5 for r in ratios.values()) and sym <= 1e-8 and dt < 60
    acceptance(4, ok, f"error ratios centered {ratios['centered']:.3f}, flow {ratios['flow']:.3f}; "
                      f"symmetry residual {sym:.1e}; {dt:.1f}s")
    assert ok


def test_criterion_05_cutoffs(acceptance):
    t0 = time.perf_counter()
    checks, rows = cutoff_suite(H1, (4, 8, 16), bound_h=(1 / 16, 1 / 32))
    full = [good_cutoff(H1, GridSpec.graded(H1, 3.0 * R, (24, 192)), R) for R in (4, 8, 16)]
    spread = {k: max(getattr(c, k) for c in full) / min(getattr(c, k) for c in full)
              for k in ("laplacian_constant", "gradient_constant")}
    full_ok = all(v <= 1.5 for v in spread.values()) and not any(c.sponge_touched for c in full)
    radial = [r for r in rows if r["stage"] == "cutoff"]
    margins = [r["margin"] for r in rows if r["stage"] == "gradient_bound"]
    dt = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and full_ok and dt < 600
    acceptance(5, ok, f"radial C_L={radial[0]['C_L']:.1f} C_Gamma={radial[0]['C_Gamma']:.1f} "
                      f"({_fmt([c for c in checks if 'ratio' in c.name])}); "
                      f"3D C_L={full[0].laplacian_constant:.1f} C_Gamma={full[0].gradient_constant:.1f} "
                      f"ratios {spread['laplacian_constant']:.3f}/{spread['gradient_constant']:.3f}; "
                      f"gradient-bound margins h=1/16 {margins[0]:.1e}, h=1/32 {margins[1]:.1e}; {dt:.0f}s")
    assert ok


def test_criterion_06_test_functions(acceptance):
    t0 = time.perf_counter()
    checks, rows = testfn_suite(H1, (1.5, 5 / 3), (4, 8, 16), triples=10)
    dt = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and dt < 300
    acceptance(6, ok, f"{_fmt(checks)}; {dt:.0f}s")
    assert ok


def test_criterion_07_ode_oracles(acceptance):
    t0 = time.perf_counter()
    torus = GridSpec.uniform((2, 2, 2), (0.5, 0.5, 0.5), periodic=True)
    one = np.ones(torus.shape)
    heat = solve(ProblemSpec("parabolic", H1, torus, 2.0, 2.0 * one, 1.0, 10.0))
    heat_ref = ode_blowup_time("parabolic", 2.0, 2.0)
    wave = solve(ProblemSpec("hyperbolic", H1, torus, 1.4, 0 * one, 1.0, 100.0, u1=one))
    wave_ref = ode_blowup_time("hyperbolic", 1.4, 1.0)
    e1 = abs(heat.T_measured - heat_ref) / heat_ref
    e2 = abs(wave.T_measured - wave_ref) / wave_ref
    dt = time.perf_counter() - t0
    ok = e1 <= 0.01 and e2 <= 0.02 and dt < 10
    acceptance(7, ok, f"heat {heat.T_measured:.5f} vs {heat_ref:.5f} ({e1:.2%}); "
                      f"wave {wave.T_measured:.4f} vs {wave_ref:.4f} ({e2:.2%}); {dt:.1f}s")
    assert ok


def _lifespan_criterion(acceptance, number, kind, p, amplitudes, budget):
    t0 = time.perf_counter()
    template = sweep_template(H1, {"kind": kind, "p": str(p)})
    out = lifespan_sweep(template, amplitudes)
    recs = sorted(out["records"], key=lambda r: r.amplitude)
    dt = time.perf_counter() - t0
    target = theoretical_exponents(H1, kind, p)["sharp"]
    fit = fit_lifespan_exponent(recs, H1)
    slope_ok = abs(fit["slope"] - target) <= 0.2 * abs(target)
    # upper-bound form: T(eps) <= C eps^target, C set by the two largest amplitudes
    scaled = [r.T_measured * r.amplitude ** (-target) for r in recs]
    C_fit = max(scaled[-2:])
    dominated = all(s <= C_fit * (1 + 1e-9) for s in scaled)
    clean = all(r.blew_up and r.usable for r in recs) and not out["contaminated"] and out["monotone"]
    ok = slope_ok and dominated and clean and dt < budget
    table = ", ".join(f"{r.amplitude:.2e}:{r.T_measured:.4g}" for r in recs)
    acceptance(number, ok, f"slope {fit['slope']:.3f} vs {target:.3f} +-20% [{'ok' if slope_ok else 'out'}]; "
                           f"domination T*eps^{-target:.2f} <= {C_fit:.4g} [{'ok' if dominated else 'violated'}]; "
                           f"usable/clean {clean}; T(eps) {table}; {dt / 60:.1f} min")
    return ok


def test_criterion_08_parabolic_lifespan(acceptance):
    assert _lifespan_criterion(acceptance, 8, "parabolic", 1.3, np.logspace(-3.5, -2, 6), 1800)


def test_criterion_09_hyperbolic_lifespan(acceptance):
    assert _lifespan_criterion(acceptance, 9, "hyperbolic", 1.4, np.logspace(-3, -1, 5), 2700)


def test_criterion_10_regime_table(acceptance):
    t0 = time.perf_counter()
    table = classify(H1, Fraction(3, 2))
    sharp = {eq: table.thresholds[eq]["sharp"] for eq in table.thresholds}
    cd = {eq: table.thresholds[eq]["cd"] for eq in table.thresholds}
    want_sharp = {"subelliptic": Fraction(2), "parabolic": Fraction(3, 2), "hyperbolic": Fraction(5, 3)}
    want_cd = {"subelliptic": Fraction(4, 3), "parabolic": Fraction(5, 4), "hyperbolic": Fraction(9, 7)}
    exact = all(isinstance(v, Fraction) for v in list(sharp.values()) + list(cd.values()))
    dt = time.perf_counter() - t0
    ok = sharp == want_sharp and cd == want_cd and exact and dt < 1
    acceptance(10, ok, "sharp " + ", ".join(f"{k}={v}" for k, v in sharp.items())
               + "; cd " + ", ".join(f"{k}={v}" for k, v in cd.items()) + f"; {dt:.2f}s")
    assert ok
