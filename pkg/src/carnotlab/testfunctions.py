"""Space-time test functions and the audits of their derivative bounds.

Two families:

* products ``(tau(t/R^k) phi_R(x))^alpha`` with ``phi_R`` a heat-smoothed
  cut-off and ``alpha = 2p/(p-1)``; ``k = 2`` for the heat equation and
  ``k = 1`` for the wave equation;
* graded bumps ``g(s_R(t, x))`` with
  ``s_R = (t^m + |x|^m) / R^m``, ``m = 2 r!``, and ``g = eta^(2p')``.

The audits measure the constants in the bounds used to kill the linear terms
of the weak formulation and report how they move with ``R``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy
from scipy import integrate

from .differential_ops import (
    GridField,
    _alg_key,
    coordinate_symbols,
    gamma,
    sub_laplacian_apply,
    sub_laplacian_symbolic,
)
from .profiles import falling_ramp
from .radial import RadialField
from .semigroup_cutoffs import CutoffFunction, good_cutoff
from .stratified_group import StratifiedAlgebra, hom_norm_power, multiply

__all__ = [
    "BumpProfile",
    "SpaceTimeTestFn",
    "make_bump",
    "s_R_eval",
    "graded_wave_estimate_audit",
    "product_testfn_audit",
    "log_integral_check",
    "weak_form_residual",
    "Trajectory",
    "product_testfn",
    "test_power",
]


def test_power(p: float) -> float:
    """``alpha = 2p/(p-1)``."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    return 2 * p / (p - 1)


test_power.__test__ = False  # keep pytest from collecting the name


# -- bump profile ----------------------------------------------------------------------


@dataclass(frozen=True)
class BumpProfile:
    """``g = eta^ell`` with ``eta`` falling from 1 at 1/2 to 0 at 1.

    ``C_g`` bounds ``(|g'| + |g''|) / g^(1/p)`` on ``{g > 0}``.
    """

    p: float
    ell: float
    C_g: float

    def base(self, s, deriv=0):
        return falling_ramp(s, 0.5, 1.0, deriv)

    def __call__(self, s, deriv: int = 0):
        e = self.base(s)
        ell = self.ell
        if deriv == 0:
            return e**ell
        e1 = self.base(s, 1)
        if deriv == 1:
            return ell * e ** (ell - 1) * e1
        if deriv == 2:
            e2 = self.base(s, 2)
            return ell * (ell - 1) * e ** (ell - 2) * e1**2 + ell * e ** (ell - 1) * e2
        raise ValueError("deriv must be 0, 1 or 2")

    def domination_ratio(self, s):
        g = self(s)
        out = np.zeros_like(g)
        pos = g > 0
        out[pos] = (np.abs(self(s[pos], 1)) + np.abs(self(s[pos], 2))) / g[pos] ** (1 / self.p)
        return out


def _measure_C_g(p, ell, samples):
    probe = BumpProfile(p, ell, math.nan)
    s = np.linspace(0.5, 1.0, samples + 1, endpoint=False)[1:]
    return float(probe.domination_ratio(s).max())


def make_bump(p: float, samples: int = 200_000) -> BumpProfile:
    """Bump with ``ell = 2p/(p-1)`` and a sampled domination constant."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    ell = 2 * p / (p - 1)
    return BumpProfile(p, ell, _measure_C_g(p, ell, samples))


# -- graded bumps ------------------------------------------------------------------


def s_R_eval(alg: StratifiedAlgebra, R: float, t, x):
    """``(t^m + |x|^m) / R^m`` with ``m = 2 r!``; vectorized over leading axes."""
    if R <= 0:
        raise ValueError("R must be positive")
    m = alg.norm_exponent
    t = np.asarray(t, dtype=float)
    return (t**m + hom_norm_power(alg, alg.check_point(x))) / float(R) ** m


@lru_cache(maxsize=None)
def _norm_power_forms(key):
    strata, entries = key
    alg = StratifiedAlgebra.from_constants(list(strata), [tuple(e) for e in entries])
    xs = coordinate_symbols(alg)
    M = hom_norm_power(alg, np.array(xs, dtype=object))
    g = sympy.lambdify(xs, gamma(alg, M), "numpy")
    lap = sympy.lambdify(xs, sub_laplacian_symbolic(alg, M), "numpy")
    return g, lap


def graded_bump_operator(alg, bump: BumpProfile, R: float, t, x):
    """Exact ``(d_tt + L) g(s_R)`` by the chain rule."""
    m = alg.norm_exponent
    g_form, lap_form = _norm_power_forms(_alg_key(alg))
    cols = [x[..., j] for j in range(alg.total_dim)]
    Rm = float(R) ** m
    s = s_R_eval(alg, R, t, x)
    st = m * t ** (m - 1) / Rm
    stt = m * (m - 1) * t ** (m - 2) / Rm
    gam = np.broadcast_to(g_form(*cols), s.shape) / Rm**2
    lap = np.broadcast_to(lap_form(*cols), s.shape) / Rm
    return bump(s, 2) * (st**2 + gam) + bump(s, 1) * (stt + lap)


def _graded_bump_operator_fd(alg, bump, R, t, x, rel_step=1e-3):
    """Second differences in ``t`` plus group-translation differences along the horizontal frame."""
    h = rel_step * R
    f = lambda tt, xx: bump(s_R_eval(alg, R, tt, xx))
    f0 = f(t, x)
    out = (f(t + h, x) - 2 * f0 + f(t - h, x)) / h**2
    for k in range(alg.horizontal_dim):
        e = np.zeros(alg.total_dim)
        e[k] = h
        out = out + (f(t, multiply(alg, x, e)) - 2 * f0 + f(t, multiply(alg, x, -e))) / h**2
    return out


def _box_samples(alg, R, resolution):
    """Regular grid on ``[0, R] x prod [-R^i, R^i]`` (scales with ``R`` by dilation)."""
    axes = [np.linspace(0, R, resolution)]
    axes += [np.linspace(-(R ** int(l)), R ** int(l), resolution) for l in alg.layer_of]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=-1)
    return pts[:, 0], pts[:, 1:]


def graded_wave_estimate_audit(alg, p: float, R_list, resolution: int = 21, fd_check: int = 2000, seed=0):
    """``K(R) = sup |(d_tt + L) phi_R| R^2 / phi_R^(1/p)`` over ``D_R \\ D_{R/2}``.

    The operator is evaluated exactly; a finite-difference estimate on a
    random subset of the sampled nodes guards against coding slips.  Raises
    if the two disagree by more than 10% of ``K``.
    """
    R_list = list(R_list)
    if len(R_list) < 2:
        raise ValueError("need at least two radii")
    bump = make_bump(p)
    m = alg.norm_exponent
    rng = np.random.default_rng(seed)
    rows = []
    for R in R_list:
        t, x = _box_samples(alg, R, resolution)
        s = s_R_eval(alg, R, t, x)
        phi = bump(s)
        keep = (s >= 2.0**-m) & (s < 1) & (phi > 1e-12)
        op = graded_bump_operator(alg, bump, R, t[keep], x[keep])
        ratio = np.abs(op) * R**2 / phi[keep] ** (1 / p)
        K = float(ratio.max())
        pick = rng.choice(keep.sum(), size=min(fd_check, int(keep.sum())), replace=False)
        fd = _graded_bump_operator_fd(alg, bump, R, t[keep][pick], x[keep][pick])
        fd_err = float((np.abs(fd - op[pick]) * R**2 / phi[keep][pick] ** (1 / p)).max())
        if fd_err > 0.1 * K:
            raise RuntimeError(f"under-resolved audit at R = {R:g}: stencil error {fd_err:g} vs K = {K:g}")
        rows.append({"kind": "carnot_graded", "p": p, "R": R, "constant": K, "fd_error": fd_err,
                     "nodes": int(keep.sum()), "C_g": bump.C_g})
    Ks = [r["constant"] for r in rows]
    return {"rows": rows, "ratio": max(Ks) / min(Ks), "bump": bump}


def euclidean_wave_constant(p: float, dim: int, samples: int = 200_000) -> float:
    """One-variable oracle for the abelian case.

    On ``R x R^dim`` with ``s = (t^2 + |x|^2)/R^2`` one has
    ``R^2 (d_tt + Delta) g(s) = 4 s g''(s) + 2 (dim + 1) g'(s)``.
    """
    bump = make_bump(p)
    s = np.linspace(0.25, 1.0, samples, endpoint=False)
    g = bump(s)
    pos = g > 1e-12
    val = np.abs(4 * s * bump(s, 2) + 2 * (dim + 1) * bump(s, 1))
    return float((val[pos] / g[pos] ** (1 / p)).max())


# -- product test functions -----------------------------------------------------------


@dataclass
class SpaceTimeTestFn:
    """Space-time test function on a fixed spatial grid.

    ``kind`` is ``"subelliptic"`` (no time factor), ``"parabolic"``
    (``tau(t/R^2)``), ``"hyperbolic"`` (``tau(t/R)``) or ``"carnot_graded"``.
    """

    kind: str
    R: float
    alpha: float
    spatial: CutoffFunction | None = None
    bump: BumpProfile | None = None
    alg: StratifiedAlgebra | None = None

    def __post_init__(self):
        if self.kind not in ("subelliptic", "parabolic", "hyperbolic", "carnot_graded"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "carnot_graded" and (self.bump is None or self.alg is None):
            raise ValueError("carnot_graded test functions need a bump and an algebra")
        if self.kind != "carnot_graded" and self.spatial is None:
            raise ValueError("product test functions need a spatial cut-off")

    @property
    def time_scale(self) -> float:
        return {"parabolic": self.R**2, "hyperbolic": self.R}.get(self.kind, math.inf)

    @property
    def time_support(self) -> float:
        if self.kind == "carnot_graded":
            return self.R
        return 2 * self.time_scale

    def temporal(self, t, deriv: int = 0):
        """Derivative of ``tau(t/T)^alpha`` in ``t``."""
        if self.kind == "subelliptic":
            return np.ones_like(np.asarray(t, float)) if deriv == 0 else np.zeros_like(np.asarray(t, float))
        T, a = self.time_scale, self.alpha
        s = np.asarray(t, float) / T
        tau = falling_ramp(s, 1.0, 2.0)
        if deriv == 0:
            return tau**a
        t1 = falling_ramp(s, 1.0, 2.0, 1) / T
        if deriv == 1:
            return a * tau ** (a - 1) * t1
        t2 = falling_ramp(s, 1.0, 2.0, 2) / T**2
        return a * (a - 1) * tau ** (a - 2) * t1**2 + a * tau ** (a - 1) * t2

    def spatial_power(self):
        return self.spatial.field.values ** self.alpha

    def evaluate(self, t, points=None):
        """``(Phi, Phi_t, Phi_tt)`` at time ``t`` on the spatial grid.

        ``points`` (coordinates on the last axis) is required for graded bumps.
        """
        if self.kind == "carnot_graded":
            m = self.alg.norm_exponent
            s = s_R_eval(self.alg, self.R, t, points)
            st = m * t ** (m - 1) / self.R**m
            stt = m * (m - 1) * t ** (m - 2) / self.R**m
            b = self.bump
            return b(s), b(s, 1) * st, b(s, 2) * st**2 + b(s, 1) * stt
        sp = self.spatial_power()
        return tuple(self.temporal(t, k) * sp for k in range(3))


def product_testfn(alg, grid, kind: str, p: float, R: float, gamma_factor: float = 2.0) -> SpaceTimeTestFn:
    return SpaceTimeTestFn(kind, R, test_power(p), spatial=good_cutoff(alg, grid, R, gamma_factor))


def _apply_L(alg, f):
    if isinstance(f, RadialField):
        return f.sub_laplacian()
    return sub_laplacian_apply(alg, f).values


def _trusted(f):
    if isinstance(f, RadialField):
        return ~f.grid.sponge_mask()
    return ~f.spec.sponge_mask() & f.spec.interior_mask(2)


def product_testfn_audit(alg, kind: str, p: float, R_list, grid_for_R, gamma_factor: float = 2.0, samples=20_001):
    """Constants of ``(tau phi_R)^alpha`` in space and time, for each ``R``.

    ``grid_for_R(R)`` builds the spatial grid (``GridSpec`` or ``RadialGrid``).
    Spatial constant: ``sup |L phi^alpha| R^2 / phi^(alpha-2)``.  Temporal
    constant: ``sup |d_t^j tau^alpha| R^2 / tau^(alpha-2)`` with ``j = 1``
    (heat) or ``j = 2`` (wave).  Also checks that ``L phi^alpha`` lives on the
    annulus ``R <= |x| <= gamma R`` and the time derivative on ``[T, 2T]``.
    """
    if kind not in ("parabolic", "hyperbolic"):
        raise ValueError("kind must be 'parabolic' or 'hyperbolic'")
    alpha = test_power(p)
    rows = []
    for R in R_list:
        fn = product_testfn(alg, grid_for_R(R), kind, p, R, gamma_factor)
        phi = fn.spatial.field
        # L phi^a / phi^(a-2) = a phi L phi + a (a-1) Gamma(phi): only bounded grid
        # quantities, so nodes at the edge of the support do not divide noise by ~0
        v = phi.values
        lap_phi = _apply_L(alg, phi)
        gam_phi = phi.gamma() if isinstance(phi, RadialField) else gamma(alg, phi).values
        reduced = alpha * v * lap_phi + alpha * (alpha - 1) * gam_phi
        lap = reduced * np.where(v > 0, v, 0.0) ** (alpha - 2)
        mask = _trusted(phi) & (v > 1e-12)
        c_space = float((np.abs(reduced[mask]) * R**2).max())
        # support of L phi^alpha: compare with the annulus
        N = _norms_of(alg, phi)
        h = _spacing(phi)
        moving = np.abs(lap) > 1e-12
        annulus_ok = bool(np.all(N[moving & _trusted(phi)] >= R - 2.5 * h)
                          and np.all(N[moving & _trusted(phi)] <= gamma_factor * R + 2.5 * h))
        T = fn.time_scale
        t = np.linspace(0, 2.5 * T, samples)
        j = 1 if kind == "parabolic" else 2
        tau_a = fn.temporal(t)
        d = fn.temporal(t, j)
        pos = tau_a > 1e-12
        c_time = float((np.abs(d[pos]) * R**2 / tau_a[pos] ** ((alpha - 2) / alpha)).max())
        live = np.abs(d) > 0
        slab_ok = bool(np.all((t[live] >= T) & (t[live] <= 2 * T)))
        rows.append({"kind": kind, "p": p, "R": R, "alpha": alpha, "C_space": c_space, "C_time": c_time,
                     "annulus_ok": annulus_ok, "slab_ok": slab_ok, "h": h})
    out = {"rows": rows}
    for key in ("C_space", "C_time"):
        vals = [r[key] for r in rows]
        out[f"{key}_ratio"] = max(vals) / min(vals)
    return out


def _norms_of(alg, f):
    if isinstance(f, RadialField):
        return f.grid.hom_norm()
    from .stratified_group import hom_norm

    return hom_norm(alg, f.spec.points()).reshape(f.spec.shape)


def _spacing(f):
    if isinstance(f, RadialField):
        return f.grid.hr
    return f.spec.spacing[0]


# -- one-dimensional integral inequality -------------------------------------------------------


def decreasing_majorant(f, s, samples: int = 4001):
    """``sup_{u >= s} f(u)`` for ``f`` vanishing past 1, by dense sampling."""
    s = float(s)
    if s >= 1:
        return 0.0
    u = np.linspace(max(s, 0.0), 1.0, samples)
    return float(np.max(f(u)))


def log_integral_check(f, A: float, h: float, R: float, tol: float = 1e-10, majorant=None, pointwise: bool = False):
    """``int_0^R f(A / rho^h) drho / rho`` against ``(ln 2 / h) F(A / R^h)``.

    ``f`` vanishes on ``[0, 1/2]`` and on ``[1, inf)``.  ``F`` is the
    decreasing majorant of ``f`` (supply ``majorant`` if known in closed form).
    With ``pointwise=True`` the bound uses ``f`` itself, which fails whenever
    ``A / R^h < 1/2`` because ``f`` is zero there.  Returns ``(lhs, rhs, margin)``.
    """
    if min(A, h, R) <= 0:
        raise ValueError("A, h and R must be positive")
    lo = A ** (1 / h)
    hi = min(R, (2 * A) ** (1 / h))
    lhs = 0.0
    if hi > lo:
        # rho in [lo, hi] is exactly where A / rho^h lies in [1/2, 1]
        integrand = lambda r: f(np.array([A / r**h]))[0] / r
        lhs, err = integrate.quad(integrand, lo, hi, epsabs=tol, epsrel=tol, limit=200)
        if err > 10 * max(tol, tol * abs(lhs)):
            raise RuntimeError(f"quadrature did not converge (error estimate {err:g})")
    a = A / R**h
    if pointwise:
        F = float(f(np.array([a]))[0])
    else:
        F = majorant(a) if majorant is not None else decreasing_majorant(f, a)
    rhs = math.log(2) / h * F
    return lhs, rhs, rhs - lhs


# -- weak formulation ----------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Stored solution snapshots ``u(times[k])`` (and ``u_t`` for the wave equation)."""

    times: np.ndarray
    values: list
    weights: np.ndarray
    u0: np.ndarray
    u1: np.ndarray | None = None
    velocities: list | None = None
    operator: object = None  # callable applying the discrete L used by the solver


def _trapezoid_weights(times):
    t = np.asarray(times, float)
    w = np.zeros_like(t)
    if len(t) > 1:
        d = np.diff(t)
        w[:-1] += d / 2
        w[1:] += d / 2
    return w


def weak_form_residual(alg, traj: Trajectory, testfn: SpaceTimeTestFn, kind: str, p: float,
                       points=None, nonlinear_sign: float = 1.0):
    """LHS - RHS of the weak inequality, with terminal terms when ``T`` is finite.

    ``kind`` in ``{"parabolic", "hyperbolic", "subelliptic"}``.  A solution of
    the equation gives a residual of zero up to quadrature and discretization
    error; a supersolution gives a nonpositive residual.  Returns
    ``(residual, scale)`` where ``scale`` is the size of the nonlinear and
    data terms.
    """
    if kind != testfn.kind and testfn.kind != "carnot_graded":
        raise ValueError(f"test function of kind {testfn.kind!r} used for a {kind} problem")
    times = np.asarray(traj.times, float)
    if testfn.kind != "subelliptic" and times[0] != 0:
        raise ValueError("trajectory must start at t = 0")
    if kind == "subelliptic":
        u = traj.values[-1]
        phi, _, _ = testfn.evaluate(0.0, points)
        Lphi = traj.operator(phi)
        nl = float((np.abs(u) ** p * phi * traj.weights).sum())
        res = nonlinear_sign * nl + float((u * Lphi * traj.weights).sum())
        return res, nl
    wt = _trapezoid_weights(times)
    w = traj.weights
    nl = lin = 0.0
    for tk, uk, ck in zip(times, traj.values, wt):
        phi, phit, phitt = testfn.evaluate(tk, points)
        Lphi = traj.operator(phi)
        nl += ck * float((np.abs(uk) ** p * phi * w).sum())
        if kind == "parabolic":
            lin += ck * float((uk * (phit + Lphi) * w).sum())
        else:
            lin -= ck * float((uk * (phitt - Lphi) * w).sum())
    phi0, phit0, _ = testfn.evaluate(0.0, points)
    phiT, phitT, _ = testfn.evaluate(times[-1], points)
    uT = traj.values[-1]
    if kind == "parabolic":
        data = float((traj.u0 * phi0 * w).sum())
        terminal = float((uT * phiT * w).sum())
    elif kind == "hyperbolic":
        if traj.u1 is None or traj.velocities is None:
            raise ValueError("wave trajectories need u1 and stored velocities")
        data = float((traj.u1 * phi0 * w).sum()) - float((traj.u0 * phit0 * w).sum())
        terminal = float((traj.velocities[-1] * phiT * w).sum()) - float((uT * phitT * w).sum())
    else:
        raise ValueError(f"unknown kind {kind!r}")
    res = nonlinear_sign * nl + data + lin - terminal
    return res, nl + abs(data)
