"""Exponent regimes, verification suites, run manifests and plots."""
from __future__ import annotations

import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .stratified_group import (
    StratifiedAlgebra,
    ball_volume_mc,
    cd_parameters,
    dilate,
    hom_norm,
    inverse,
    multiply,
    sphere_sweep_cd,
)

__all__ = [
    "RegimeTable",
    "classify",
    "RunManifest",
    "Check",
    "geometry_suite",
    "cutoff_suite",
    "testfn_suite",
    "emit_plots",
]


# -- regimes ----------------------------------------------------------------------------------


def as_fraction(x) -> Fraction:
    """Exact rational for ints, Fractions and strings like ``"5/3"``; floats snap to small denominators."""
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    f = Fraction(x).limit_denominator(10_000)
    return f if abs(float(f) - x) < 1e-12 else Fraction(x)


def _thresholds(dim: Fraction) -> dict:
    return {
        "parabolic": 1 + 2 / dim,
        "hyperbolic": (dim + 1) / (dim - 1),
        "subelliptic": dim / (dim - 2) if dim > 2 else None,
    }


def _cell(p: Fraction, thr) -> str:
    if thr is None:
        return "supercritical"  # no finite threshold: every p > 1 lies above
    if p < thr:
        return "subcritical"
    if p == thr:
        return "critical"
    return "supercritical"


@dataclass
class RegimeTable:
    """Critical exponents from ``Q`` (sharp) and from ``D`` (curvature-dimension) and where ``p`` falls."""

    preset: str
    p: Fraction
    Q: Fraction
    D: Fraction | None
    thresholds: dict
    cells: dict

    def rows(self):
        for eq, by in self.thresholds.items():
            for variant, thr in by.items():
                yield {
                    "preset": self.preset,
                    "equation": eq,
                    "variant": variant,
                    "threshold": "" if thr is None else str(thr),
                    "p": str(self.p),
                    "regime": self.cells[eq][variant],
                }


def classify(alg: StratifiedAlgebra, p) -> RegimeTable:
    p = as_fraction(p)
    if p <= 1:
        raise ValueError("p must exceed 1")
    Q = Fraction(alg.hom_dim)
    thresholds = {eq: {"sharp": thr} for eq, thr in _thresholds(Q).items()}
    D = None
    if alg.step == 2:
        try:
            D = as_fraction(cd_parameters(alg).bigD)
        except ValueError:
            D = None
    for eq, thr in (_thresholds(D).items() if D is not None else ((e, None) for e in thresholds)):
        thresholds[eq]["cd"] = thr
    cells = {eq: {v: (_cell(p, thr) if (thr is not None or v == "sharp") else "n/a") for v, thr in by.items()}
             for eq, by in thresholds.items()}
    return RegimeTable(alg.name or "custom", p, Q, D, thresholds, cells)


# -- manifest ---------------------------------------------------------------------------------


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str = __version__
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def add_output(self, path, stage: str):
        self.outputs.append({"stage": stage, "path": str(path), "sha256": sha256_of(path)})

    def time_stage(self, stage: str, seconds: float):
        self.timings[stage] = round(seconds, 3)

    def to_dict(self) -> dict:
        return {
            "tool": "carnotlab",
            "version": self.version,
            "python": platform.python_version(),
            "seed": self.seed,
            "config": self.config,
            "outputs": self.outputs,
            "timings": self.timings,
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


# -- suites -----------------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""

    def row(self):
        return {"check": self.name, "value": self.value, "bound": self.bound, "passed": int(self.passed),
                "detail": self.detail}


def _random_points(alg, rng, n, scale=2.0):
    return rng.uniform(-scale, scale, size=(n, alg.total_dim))


def _rel(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))))


def geometry_suite(alg: StratifiedAlgebra, seed: int = 0, cases: int = 1000, mc_samples: int = 0):
    """Group-law identities on random points, Haar scaling, and the CD parameters."""
    rng = np.random.default_rng(seed)
    x, y, z = (_random_points(alg, rng, cases) for _ in range(3))
    lam = rng.uniform(0.25, 4.0, size=cases)
    checks = []
    err = _rel(multiply(alg, multiply(alg, x, y), z), multiply(alg, x, multiply(alg, y, z)))
    checks.append(Check("associativity", err, 1e-12, err <= 1e-12))
    err = max(_rel(multiply(alg, x, inverse(x)), 0 * x), _rel(multiply(alg, inverse(x), x), 0 * x))
    checks.append(Check("inverse", err, 1e-12, err <= 1e-12))
    err = _rel(dilate(alg, lam, multiply(alg, x, y)), multiply(alg, dilate(alg, lam, x), dilate(alg, lam, y)))
    checks.append(Check("dilation_automorphism", err, 1e-12, err <= 1e-12))
    err = _rel(hom_norm(alg, dilate(alg, lam, x)), lam * hom_norm(alg, x))
    checks.append(Check("norm_homogeneity", err, 1e-12, err <= 1e-12))
    if mc_samples:
        for R in (1.0, 2.0):
            v1, s1 = ball_volume_mc(alg, R, mc_samples, seed=seed + 1)
            v2, s2 = ball_volume_mc(alg, 2 * R, mc_samples, seed=seed + 2)
            ratio = v2 / v1
            se = ratio * math.hypot(s1 / v1, s2 / v2)
            dev = abs(ratio - 2**alg.hom_dim) / se
            checks.append(Check(f"haar_scaling_R{R:g}", dev, 3.0, dev <= 3.0, f"ratio={ratio:.4f}"))
    if alg.step == 2:
        try:
            cd = cd_parameters(alg)
            rho_s, kap_s = sphere_sweep_cd(alg, seed=seed)
            err = max(abs(rho_s - cd.rho2), abs(kap_s - cd.kappa))
            checks.append(Check("cd_sphere_sweep", err, 1e-3, err <= 1e-3,
                                f"rho2={cd.rho2:g} kappa={cd.kappa:g} d={cd.d} D={cd.bigD:g}"))
        except ValueError as exc:
            checks.append(Check("cd_sphere_sweep", math.nan, 0.0, True, f"skipped: {exc}"))
    return checks


def cutoff_grid(alg, R, half_nodes=(24, 192), extent_factor=3.0, radial_nodes=(96, 384)):
    """Radial grid for Heisenberg groups, graded full grid otherwise; both scale with ``R``."""
    from .radial import RadialGrid
    from .differential_ops import GridSpec

    if alg.name.startswith("heisenberg-"):
        n = alg.horizontal_dim // 2
        nr, nt = radial_nodes
        r_max = extent_factor * R
        t_max = 1.5 * (extent_factor * R) ** 2
        return RadialGrid(n, nr, r_max / nr, nt, 2 * t_max / nt)
    return GridSpec.graded(alg, extent_factor * R, half_nodes)


def cutoff_suite(alg, radii=(4, 8, 16), bound_h=(1 / 16, 1 / 32), grid_for_R=None):
    """Cut-off constants across ``R`` and the semigroup gradient bound under refinement."""
    from .radial import RadialGrid
    from .semigroup_cutoffs import good_cutoff, verify_semigroup_gradient_bound

    grid_for_R = grid_for_R or (lambda R: cutoff_grid(alg, R))
    rows, checks = [], []
    cuts = [good_cutoff(alg, grid_for_R(R), R) for R in radii]
    rows += [dict(c.row(), stage="cutoff") for c in cuts]
    for key, attr in (("C_L", "laplacian_constant"), ("C_Gamma", "gradient_constant")):
        vals = [getattr(c, attr) for c in cuts]
        ratio = max(vals) / min(vals)
        checks.append(Check(f"cutoff_{key}_ratio", ratio, 1.5, ratio <= 1.5))
    bands = all(np.all((c.field.values >= 0) & (c.field.values <= 1)) for c in cuts)
    checks.append(Check("cutoff_range_0_1", float(bands), 1.0, bands))
    clean = not any(c.sponge_touched for c in cuts)
    checks.append(Check("cutoff_sponge_clean", float(clean), 1.0, clean))
    if alg.name.startswith("heisenberg-"):
        margins = []
        for h in bound_h:
            g = RadialGrid.covering(alg.horizontal_dim // 2, 9.0, 10.0, h, h)
            f = g.sample(lambda r, t: np.exp(-(r**2) - t**2))
            rep = verify_semigroup_gradient_bound(alg, f, 0.1, 1.0)
            margins.append(rep.margin)
            rows.append(dict(rep.row(), stage="gradient_bound"))
        checks.append(Check("gradient_bound_margin", margins[-1], -1e-4, margins[-1] >= -1e-4))
        improving = margins[-1] >= margins[0] - 1e-10
        checks.append(Check("gradient_bound_refinement", margins[-1] - margins[0], -1e-10, improving))
    return checks, rows


def testfn_suite(alg, p_list=(1.5, 5 / 3), radii=(4, 8, 16), triples: int = 10):
    """Graded-bump, product and one-dimensional integral audits."""
    from .testfunctions import graded_wave_estimate_audit, log_integral_check, make_bump, product_testfn_audit

    checks, rows = [], []
    for p in p_list:
        a = graded_wave_estimate_audit(alg, p, radii)
        rows += [dict(r, stage="graded") for r in a["rows"]]
        checks.append(Check(f"graded_ratio_p{p:.4g}", a["ratio"], 1.3, a["ratio"] <= 1.3))
    for kind in ("parabolic", "hyperbolic"):
        a = product_testfn_audit(alg, kind, p_list[0], radii, lambda R: cutoff_grid(alg, R))
        rows += [dict(r, stage="product") for r in a["rows"]]
        for key in ("C_space_ratio", "C_time_ratio"):
            checks.append(Check(f"product_{kind}_{key}", a[key], 1.5, a[key] <= 1.5))
        supp = all(r["annulus_ok"] and r["slab_ok"] for r in a["rows"])
        checks.append(Check(f"product_{kind}_supports", float(supp), 1.0, supp))
    bump = make_bump(2.0)
    f = lambda u: np.where(np.asarray(u) >= 0.5, bump(u), 0.0)
    majorant = lambda s: float(bump(max(s, 0.5)))
    worst = math.inf
    for A in np.geomspace(0.01, 100, triples):
        for h in np.linspace(0.5, 8, triples):
            for R in np.geomspace(0.1, 10, triples):
                worst = min(worst, log_integral_check(f, A, h, R, majorant=majorant)[2])
    checks.append(Check("integral_inequality_margin", worst, -1e-9, worst >= -1e-9))
    return checks, rows


testfn_suite.__test__ = False  # keep pytest from collecting the name


# -- plots ---------------------------------------------------------------------------------------


def emit_plots(sweep_csv, out_svg, alg=None):
    """Log-log lifespan plot with the fitted line and both theoretical reference slopes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .semilinear import fit_lifespan_exponent, read_sweep_csv, theoretical_exponents

    records = read_sweep_csv(sweep_csv)
    fit = fit_lifespan_exponent(records, min_points=2)
    kind, p = records[0].kind, records[0].p
    amps = np.array([r.amplitude for r in records if r.usable])
    Ts = np.array([r.T_measured for r in records if r.usable])
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.loglog(amps, Ts, "o", label="measured")
    grid = np.geomspace(amps.min(), amps.max(), 50)
    ax.loglog(grid, np.exp(fit["intercept"]) * grid ** fit["slope"], "-", label=f"fit, slope {fit['slope']:.3f}")
    lines = {}
    if alg is not None:
        theory = theoretical_exponents(alg, kind, p)
        anchor = np.argmax(amps)
        for key, style in (("sharp", "--"), ("cd", ":")):
            s = theory[key]
            if math.isfinite(s):
                ax.loglog(grid, Ts[anchor] * (grid / amps[anchor]) ** s, style, label=f"{key} slope {s:.3f}")
                lines[key] = s
    ax.set_xlabel("amplitude")
    ax.set_ylabel("lifespan T")
    ax.set_title(f"{kind}, p = {p:g}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    return {"fit": fit, "reference_slopes": lines, "path": str(out_svg)}
