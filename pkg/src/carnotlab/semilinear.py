"""Semilinear heat and wave equations with ``|u|^p`` forcing and blow-up detection.

Two backends share one driver:

* full grids (:class:`GridSpec`): monotone flow stencil, optional periodic box;
* radial Heisenberg grids (:class:`RadialGrid`): vertical term exact in
  Fourier space, radial term explicit.  When the solution reaches the outer
  half of the box the grid is dilated (``h_r`` doubles, ``h_t`` quadruples)
  and the solution interpolated, so long small-data runs stay affordable.

Heat: ``u += dt (L u + |u|^p)`` with ``dt = min(dt_stable, c ||u||^(1-p))``.
Wave: velocity Verlet with ``dt = min(dt_stable, c ||u||^((1-p)/2))``.
Blow-up is declared at ``||u|| >= 1e8``; the reported time is extrapolated
from the crossings of ``1e6`` and ``1e8`` assuming
``T(M) = T* - C M^(-a)`` with ``a = p - 1`` (heat) or ``(p - 1)/2`` (wave).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from .differential_ops import FlowLaplacian, GridSpec
from .radial import RadialGrid
from .stratified_group import StratifiedAlgebra, cd_parameters, hom_norm
from .testfunctions import Trajectory

__all__ = [
    "ProblemSpec",
    "LifespanRecord",
    "solve",
    "simulate",
    "lifespan_sweep",
    "fit_lifespan_exponent",
    "theoretical_exponents",
    "default_bump",
    "ode_blowup_time",
    "record_trajectory",
    "write_sweep_csv",
    "read_sweep_csv",
]


@dataclass(frozen=True)
class ProblemSpec:
    """One initial-value problem.

    ``u0``/``u1`` are arrays on ``grid``.  ``amplitude`` multiplies ``u0`` for
    the heat equation and ``u1`` for the wave equation.
    """

    kind: str
    alg: StratifiedAlgebra | None
    grid: object
    p: float
    u0: np.ndarray
    amplitude: float
    horizon: float
    u1: np.ndarray | None = None
    threshold: float = 1e8
    low_threshold: float = 1e6
    dt_factor: float = 0.1
    regrid: bool = True
    sponge_tol: float = 1e-6
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.kind not in ("parabolic", "hyperbolic"):
            raise ValueError(f"kind must be 'parabolic' or 'hyperbolic', got {self.kind!r}")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.kind == "hyperbolic" and self.u1 is None:
            raise ValueError("wave problems need u1")
        if not self.low_threshold < self.threshold:
            raise ValueError("low_threshold must be below threshold")

    @property
    def rate_exponent(self) -> float:
        return self.p - 1 if self.kind == "parabolic" else (self.p - 1) / 2


@dataclass
class LifespanRecord:
    amplitude: float
    blew_up: bool
    T_measured: float
    refinement_pair: tuple
    boundary_contaminated: bool
    kind: str = ""
    p: float = math.nan
    regrids: int = 0
    steps: int = 0

    @property
    def refinement_gap(self) -> float:
        a, b = self.refinement_pair
        if not (math.isfinite(a) and math.isfinite(b)) or b == 0:
            return math.nan
        return abs(a - b) / abs(b)

    @property
    def usable(self) -> bool:
        return self.blew_up and not self.boundary_contaminated and self.refinement_gap <= 0.05

    def row(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "amplitude": self.amplitude,
            "T": self.T_measured,
            "blew_up": int(self.blew_up),
            "refinement_gap": self.refinement_gap,
            "contaminated": int(self.boundary_contaminated),
        }


# -- data ------------------------------------------------------------------------------------


def default_bump(alg, grid):
    """``exp(-|x|^4)`` cut to zero on the sponge layer."""
    if isinstance(grid, RadialGrid):
        u = np.exp(-grid.hom_norm() ** 4)
        u[grid.sponge_mask()] = 0.0
        return u
    u = np.exp(-hom_norm(alg, grid.points()) ** 4).reshape(grid.shape)
    if not grid.periodic:
        u[grid.sponge_mask()] = 0.0
    return u


def ode_blowup_time(kind: str, p: float, value: float) -> float:
    """Blow-up time of the space-independent problem.

    Heat: ``u' = u^p``, ``u(0) = value``.  Wave: ``u'' = |u|^p``, ``u(0) = 0``,
    ``u'(0) = value``, from the conserved energy by quadrature.
    """
    if kind == "parabolic":
        return value ** (1 - p) / (p - 1)
    s2 = value**2
    f = lambda u: 1.0 / math.sqrt(s2 + 2 * u ** (p + 1) / (p + 1))
    val, err = integrate.quad(f, 0, math.inf, epsabs=1e-12, epsrel=1e-12, limit=500)
    return val


# -- backends -------------------------------------------------------------------------------


class _GridBackend:
    def __init__(self, alg, spec: GridSpec):
        self.spec = spec
        self.op = FlowLaplacian(alg, spec)
        self.sponge = np.zeros(spec.shape, bool) if spec.periodic else spec.sponge_mask()
        self.weights = np.full(spec.shape, spec.cell_volume)

    def dt_parabolic(self):
        return self.op.parabolic_dt()

    def dt_hyperbolic(self):
        return self.op.hyperbolic_dt()

    def heat(self, u, dt, p):
        return u + dt * (self.op.apply(u) + np.abs(u) ** p)

    def accel(self, u, p):
        return self.op.apply(u) + np.abs(u) ** p

    def laplacian(self, u):
        return self.op.apply(u)

    def needs_regrid(self, arrays, tol):
        return False


class _RadialBackend:
    def __init__(self, grid: RadialGrid):
        self.set_grid(grid)

    def set_grid(self, grid):
        self.grid = grid
        self.sponge = grid.sponge_mask()
        rr, tt = grid.mesh()
        self.outer_half = (rr > 0.5 * grid.r_max) | (np.abs(tt) > 0.5 * grid.t_max)
        self.weights = grid.weights

    def dt_parabolic(self):
        return self.grid.parabolic_dt()

    def dt_hyperbolic(self):
        return self.grid.hyperbolic_dt()

    def heat(self, u, dt, p):
        g = self.grid
        u = g.vertical_flow(u, 0.5 * dt)
        u = u + dt * (g.radial_part(u) + np.abs(u) ** p)
        return g.vertical_flow(u, 0.5 * dt)

    def accel(self, u, p):
        return self.grid.laplacian(u) + np.abs(u) ** p

    def laplacian(self, u):
        return self.grid.laplacian(u)

    def needs_regrid(self, arrays, tol):
        scale = max(float(np.abs(a).max()) for a in arrays)
        if scale == 0:
            return False
        return max(float(np.abs(a[self.outer_half]).max()) for a in arrays) > tol * scale

    def dilate(self, arrays):
        """Move to the grid dilated by 2 and interpolate ``arrays`` onto it."""
        old = self.grid
        new = RadialGrid(old.n, old.nr, 2 * old.hr, old.nt, 4 * old.ht)
        # extend in r by the axis mirror and the zero exterior, in t periodically
        r_ext = np.concatenate([[-old.r[0]], old.r, [old.r_max + 0.5 * old.hr]])
        t_ext = np.concatenate([old.t, [old.t_max]])
        rr, tt = new.mesh()
        inside = (rr <= old.r_max) & (np.abs(tt) <= old.t_max)
        pts = np.stack([rr[inside], tt[inside]], axis=-1)
        out = []
        for a in arrays:
            ext = np.concatenate([a[:1], a, np.zeros_like(a[:1])], axis=0)
            ext = np.concatenate([ext, ext[:, :1]], axis=1)
            ip = RegularGridInterpolator((r_ext, t_ext), ext)
            b = np.zeros(new.shape)
            b[inside] = ip(pts)
            out.append(b)
        self.set_grid(new)
        return out


def _backend(problem: ProblemSpec):
    if isinstance(problem.grid, RadialGrid):
        return _RadialBackend(problem.grid)
    if problem.alg is None:
        raise ValueError("full-grid problems need an algebra")
    return _GridBackend(problem.alg, problem.grid)


# -- driver ------------------------------------------------------------------------------------


@dataclass
class _RunResult:
    blew_up: bool
    T: float
    contaminated: bool
    regrids: int
    steps: int
    crossings: dict = field(default_factory=dict)
    final: np.ndarray | None = None


def _crossing_time(t0, t1, m0, m1, level):
    """Time where ``||u||`` crosses ``level``, interpolating ``log ||u||`` linearly."""
    if m1 <= m0:
        return t1
    a, b, c = math.log(m0), math.log(m1), math.log(level)
    return t0 + (t1 - t0) * (c - a) / (b - a)


def _extrapolate(T_lo, T_hi, M_lo, M_hi, a):
    w_lo, w_hi = M_lo ** (-a), M_hi ** (-a)
    return T_hi + (T_hi - T_lo) * w_hi / (w_lo - w_hi)


def simulate(problem: ProblemSpec, dt_scale: float = 1.0, check_every: int = 25,
             on_step=None) -> _RunResult:
    """Run one problem until blow-up, horizon, or contamination.

    ``on_step(t, u, v, backend)`` is called after every step if given.
    """
    be = _backend(problem)
    p = problem.p
    para = problem.kind == "parabolic"
    u = np.array(problem.u0, dtype=float) * (problem.amplitude if para else 1.0)
    v = None if para else np.array(problem.u1, dtype=float) * problem.amplitude
    dt_stable = (be.dt_parabolic() if para else be.dt_hyperbolic()) * dt_scale
    fac = problem.dt_factor * dt_scale
    nl_exp = (1 - p) if para else (1 - p) / 2
    t, steps, regrids = 0.0, 0, 0
    crossings = {}
    contaminated = False
    m = float(np.abs(u).max())
    if not para:
        a_prev = be.accel(u, p)
    scale0 = max(m, 0.0 if para else float(np.abs(v).max()))
    while t < problem.horizon and steps < problem.max_steps:
        dt = dt_stable if m == 0 else min(dt_stable, fac * m**nl_exp)
        dt = min(dt, problem.horizon - t)
        if para:
            u = be.heat(u, dt, p)
        else:
            v = v + 0.5 * dt * a_prev
            u = u + dt * v
            a_prev = be.accel(u, p)
            v = v + 0.5 * dt * a_prev
        t_prev, t = t, t + dt
        steps += 1
        m_prev, m = m, float(np.abs(u).max())
        if on_step is not None:
            on_step(t, u, v, be)
        if not math.isfinite(m):
            raise FloatingPointError("solution became non-finite before crossing the threshold")
        for level in (problem.low_threshold, problem.threshold):
            if level not in crossings and m >= level:
                crossings[level] = _crossing_time(t_prev, t, max(m_prev, 1e-300), m, level)
        if problem.threshold in crossings:
            T = _extrapolate(crossings[problem.low_threshold], crossings[problem.threshold],
                             problem.low_threshold, problem.threshold, problem.rate_exponent)
            return _RunResult(True, T, contaminated, regrids, steps, crossings, u)
        if steps % check_every == 0:
            arrays = [u] if para else [u, v]
            if problem.regrid and isinstance(be, _RadialBackend) and be.needs_regrid(arrays, problem.sponge_tol):
                arrays = be.dilate(arrays)
                u = arrays[0]
                if not para:
                    v = arrays[1]
                    a_prev = be.accel(u, p)
                regrids += 1
                dt_stable = (be.dt_parabolic() if para else be.dt_hyperbolic()) * dt_scale
            scale = max(float(np.abs(a).max()) for a in arrays)
            if scale and be.sponge.any() and any(np.abs(a[be.sponge]).max() > problem.sponge_tol * scale for a in arrays):
                contaminated = True
    return _RunResult(False, t, contaminated, regrids, steps, crossings, u)


def solve(problem: ProblemSpec) -> LifespanRecord:
    """Lifespan from runs at the default step and at half of it, extrapolated in ``dt``."""
    coarse = simulate(problem, 1.0)
    fine = simulate(problem, 0.5)
    blew = coarse.blew_up and fine.blew_up
    T = problem.horizon
    if blew:
        # step-size extrapolation: the heat scheme is first order in dt, Verlet second
        order = 1 if problem.kind == "parabolic" else 2
        T = fine.T + (fine.T - coarse.T) / (2**order - 1)
    return LifespanRecord(
        amplitude=problem.amplitude,
        blew_up=blew,
        T_measured=T,
        refinement_pair=(coarse.T, fine.T) if blew else (math.nan, math.nan),
        boundary_contaminated=coarse.contaminated or fine.contaminated,
        kind=problem.kind,
        p=problem.p,
        regrids=fine.regrids,
        steps=fine.steps,
    )


def lifespan_sweep(template: ProblemSpec, amplitudes) -> dict:
    """One :func:`solve` per amplitude; records in amplitude order."""
    amplitudes = [float(a) for a in amplitudes]
    if not amplitudes:
        raise ValueError("empty amplitude list")
    records = [solve(replace(template, amplitude=a)) for a in amplitudes]
    ordered = sorted(records, key=lambda r: r.amplitude)
    times = [r.T_measured for r in ordered if r.blew_up]
    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(times, times[1:]))
    return {
        "records": records,
        "monotone": monotone,
        "contaminated": any(r.boundary_contaminated for r in records),
    }


# -- fitting ------------------------------------------------------------------------------------


def theoretical_exponents(alg, kind: str, p: float) -> dict:
    """Lifespan exponents from the homogeneous dimension and from the curvature dimension."""
    Q = alg.hom_dim
    try:
        D = cd_parameters(alg).bigD
    except ValueError:
        D = math.nan

    def expo(dim):
        if kind == "parabolic":
            gap = 1 / (p - 1) - dim / 2
        else:
            gap = (p + 1) / (p - 1) - dim
        return -1 / gap if gap > 0 else math.nan

    return {"sharp": expo(Q), "cd": expo(D), "Q": Q, "D": D}


def fit_lifespan_exponent(records, alg=None, min_points: int = 5) -> dict:
    """Least squares of ``log T`` on ``log amplitude`` over usable records."""
    pts = [(r.amplitude, r.T_measured) for r in records if getattr(r, "usable", True)]
    if len(pts) < min_points:
        raise ValueError(f"need at least {min_points} usable records, got {len(pts)}")
    x = np.log([a for a, _ in pts])
    y = np.log([T for _, T in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss if ss > 0 else 1.0
    out = {"slope": float(slope), "intercept": float(intercept), "r2": r2, "n": len(pts)}
    if alg is not None and records:
        r0 = records[0]
        out["theory"] = theoretical_exponents(alg, r0.kind, r0.p)
    return out


# -- trajectories for the weak form -------------------------------------------------------------


def record_trajectory(problem: ProblemSpec, t_end: float, record_every: int = 1) -> Trajectory:
    """Solve without regridding up to ``t_end`` and keep snapshots for quadrature."""
    prob = replace(problem, regrid=False, horizon=t_end)
    para = prob.kind == "parabolic"
    times, values, vels = [0.0], [np.array(prob.u0, float) * (prob.amplitude if para else 1.0)], []
    if not para:
        vels.append(np.array(prob.u1, float) * prob.amplitude)
    count = [0]
    holder = {}

    def keep(t, u, v, be):
        holder["be"] = be
        count[0] += 1
        if count[0] % record_every == 0 or t >= t_end:
            times.append(t)
            values.append(u.copy())
            if v is not None:
                vels.append(v.copy())

    res = simulate(prob, on_step=keep)
    if res.blew_up:
        raise RuntimeError("solution blew up inside the recording window")
    if times[-1] < t_end:
        raise RuntimeError("recording stopped before t_end")
    be = holder["be"]
    return Trajectory(
        times=np.array(times),
        values=values,
        weights=be.weights,
        u0=values[0] if para else np.array(prob.u0, float),
        u1=None if para else vels[0],
        velocities=None if para else vels,
        operator=be.laplacian,
    )


# -- persistence -------------------------------------------------------------------------------------

_FIELDS = ["kind", "p", "amplitude", "T", "blew_up", "refinement_gap", "contaminated"]


def write_sweep_csv(path, records, append: bool = False):
    new = not append
    try:
        new = new or open(path).read() == ""
    except FileNotFoundError:
        new = True
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_FIELDS)
        if new:
            w.writeheader()
        for r in records:
            w.writerow(r.row())


def read_sweep_csv(path) -> list:
    """Parse a sweep file back into :class:`LifespanRecord` objects."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(_FIELDS) <= set(reader.fieldnames):
            raise ValueError(f"{path}: malformed sweep CSV (need columns {_FIELDS})")
        for row in reader:
            try:
                gap = float(row["refinement_gap"])
                T = float(row["T"])
                out.append(LifespanRecord(
                    amplitude=float(row["amplitude"]),
                    blew_up=bool(int(row["blew_up"])),
                    T_measured=T,
                    refinement_pair=(T * (1 + gap) if math.isfinite(gap) else math.nan, T),
                    boundary_contaminated=bool(int(row["contaminated"])),
                    kind=row["kind"],
                    p=float(row["p"]),
                ))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row {row}") from exc
    if not out:
        raise ValueError(f"{path}: empty sweep")
    return out
