"""Discrete heat semigroup and semigroup-smoothed cut-off functions.

Fields live either on a full grid (:class:`GridField`, evolved with the
monotone flow stencil) or on a radial Heisenberg grid (:class:`RadialField`,
evolved with the split radial/Fourier scheme).  Every public function accepts
both.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .differential_ops import FlowLaplacian, GridField, GridSpec, gamma, gamma_Z, sub_laplacian_apply
from .profiles import falling_ramp, rising_ramp
from .radial import RadialField, RadialGrid
from .stratified_group import CdParams, StratifiedAlgebra, cd_parameters, heisenberg, hom_norm

__all__ = [
    "HeatRun",
    "CutoffFunction",
    "GradientBoundReport",
    "heat_evolve",
    "coarse_cutoff",
    "gradient_constant",
    "good_cutoff",
    "verify_semigroup_gradient_bound",
    "write_report_csv",
]


# -- field helpers --------------------------------------------------------------


def _same_kind(f, values):
    if isinstance(f, RadialField):
        return RadialField(f.grid, values)
    return GridField(f.spec, values)


def _mass(f) -> float:
    return f.integral()


def _sponge(f, fraction=0.1):
    if isinstance(f, RadialField):
        return f.grid.sponge_mask(fraction)
    return f.spec.sponge_mask(fraction)


def _measure_mask(f):
    """Nodes where centred measurements are trusted: off the sponge and off the edge."""
    if isinstance(f, RadialField):
        return ~f.grid.sponge_mask()
    return ~f.spec.sponge_mask() & f.spec.interior_mask(2)


def _norms(alg, f):
    if isinstance(f, RadialField):
        return f.grid.hom_norm()
    return hom_norm(alg, f.spec.points()).reshape(f.spec.shape)


def _forms(alg, f):
    """``(Gamma f, Gamma^Z f, L f)`` as arrays, centred differences."""
    if isinstance(f, RadialField):
        return f.gamma(), f.gamma_Z(), f.sub_laplacian()
    gz = gamma_Z(alg, f).values if alg.step == 2 else np.zeros(f.spec.shape)
    return gamma(alg, f).values, gz, sub_laplacian_apply(alg, f).values


def _grid_step(f):
    if isinstance(f, RadialField):
        return f.grid.hr
    return min(f.spec.spacing)


# -- heat flow ------------------------------------------------------------------------


@dataclass
class HeatRun:
    initial: object
    dt: float
    steps: int
    snapshots: dict
    final: object
    t_final: float
    mass: list
    sponge_touched: bool
    max_principle_ok: bool
    dt_limit: float = field(default=math.nan)

    @property
    def mass_drift(self) -> float:
        m0 = self.mass[0]
        if m0 == 0:
            return abs(self.mass[-1])
        return abs(self.mass[-1] - m0) / abs(m0)


class _FlowStepper:
    def __init__(self, alg, f: GridField, operator=None):
        self.op = operator if operator is not None else FlowLaplacian(alg, f.spec)
        diag = -self.op.matrix.diagonal()
        self.limit = 1.0 / float(diag.max())
        self.default_dt = self.op.parabolic_dt()

    def step(self, u, dt):
        return u + dt * self.op.apply(u)


class _RadialStepper:
    def __init__(self, f: RadialField):
        self.grid = f.grid
        self.limit = 1.0 / self.grid.radial_diag_max
        self.default_dt = self.grid.parabolic_dt()

    def step(self, u, dt):
        return self.grid.heat_step(u, dt)


def heat_evolve(alg, u0, t_final: float, dt=None, snapshot_times=(), operator=None,
                sponge_tol: float = 1e-10, check_every: int = 10) -> HeatRun:
    """Explicit heat flow ``u_t = L u`` up to ``t_final``.

    ``dt`` defaults to the stencil's stable step and is shortened so that the
    run lands exactly on ``t_final``.  A ``dt`` beyond the monotonicity limit
    raises.  ``sponge_touched`` is set when the solution exceeds
    ``sponge_tol * max|u0|`` on the outer 10% of the grid.
    """
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    stepper = _RadialStepper(u0) if isinstance(u0, RadialField) else _FlowStepper(alg, u0, operator)
    if dt is None:
        dt = stepper.default_dt
    if dt <= 0 or dt > stepper.limit * (1 + 1e-12):
        raise ValueError(f"CFL violation: dt = {dt:g} exceeds the stable limit {stepper.limit:g}")
    steps = int(math.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    if steps:
        dt = t_final / steps

    u = u0.values.copy()
    lo, hi = float(u.min()), float(u.max())
    scale = max(abs(lo), abs(hi))
    sponge = _sponge(u0)
    wanted = sorted(snapshot_times)
    snap_steps = {int(round(s / dt)) if steps else 0: s for s in wanted}
    snapshots, mass = {}, [_mass(u0)]
    touched = bool(scale and np.abs(u[sponge]).max() > sponge_tol * scale)
    mp_ok = True
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = _same_kind(u0, u.copy())
    for n in range(1, steps + 1):
        u = stepper.step(u, dt)
        if n % check_every == 0 or n == steps or n in snap_steps:
            if scale and np.abs(u[sponge]).max() > sponge_tol * scale:
                touched = True
            if u.min() < lo - 1e-8 or u.max() > hi + 1e-8:
                mp_ok = False
        if n in snap_steps:
            fld = _same_kind(u0, u.copy())
            snapshots[snap_steps[n]] = fld
            mass.append(_mass(fld))
    final = _same_kind(u0, u)
    if steps not in snap_steps or steps == 0:
        mass.append(_mass(final))
    return HeatRun(u0, dt, steps, snapshots, final, t_final, mass, touched, mp_ok, stepper.limit)


# -- cut-offs ---------------------------------------------------------------------------


def _check_room(alg, grid, R, gamma_factor):
    outer = gamma_factor * R
    if isinstance(grid, RadialGrid):
        room = [(grid.r_max, 1), (grid.t_max, 2)]
    else:
        room = [(e, int(layer)) for e, layer in zip(grid.extents, alg.layer_of)]
    for extent, layer in room:
        if outer**layer > 0.9 * extent:
            raise ValueError(
                f"R = {R:g} too large for grid: B_(gamma R) needs {outer**layer:g} per layer-{layer} axis, "
                f"usable extent is {0.9 * extent:g}"
            )


def coarse_cutoff(alg, grid, R: float, gamma_factor: float = 2.0):
    """``eta(|x|/R)`` with ``eta`` = 1 on [0, 1] and 0 beyond ``gamma_factor``."""
    if R <= 0 or gamma_factor <= 1:
        raise ValueError("need R > 0 and gamma_factor > 1")
    _check_room(alg, grid, R, gamma_factor)
    if isinstance(grid, RadialGrid):
        N = grid.hom_norm()
        return RadialField(grid, falling_ramp(N / R, 1.0, gamma_factor))
    N = hom_norm(alg, grid.points()).reshape(grid.shape)
    return GridField(grid, falling_ramp(N / R, 1.0, gamma_factor))


def gradient_constant(alg, f, R: float) -> float:
    """``sup (Gamma f + (R/2)^2 Gamma^Z f) * R^2`` over trusted nodes."""
    g, gz, _ = _forms(alg, f)
    mask = _measure_mask(f)
    return float(((g + (R / 2) ** 2 * gz) * R**2)[mask].max())


@dataclass
class CutoffFunction:
    field: object
    R: float
    gamma_factor: float
    t_R: float
    nu: float
    A: float
    C0: float
    C1: float
    halvings: int
    laplacian_constant: float
    gradient_constant: float
    support_radius: float
    sponge_touched: bool
    mass_drift: float

    def row(self) -> dict:
        return {
            "R": self.R,
            "gamma": self.gamma_factor,
            "t_R": self.t_R,
            "C0": self.C0,
            "C1": self.C1,
            "halvings": self.halvings,
            "C_L": self.laplacian_constant,
            "C_Gamma": self.gradient_constant,
            "support_radius": self.support_radius,
            "h": _grid_step(self.field),
            "sponge_touched": self.sponge_touched,
        }


def _algebra_for(alg, grid):
    if isinstance(grid, RadialGrid):
        return heisenberg(grid.n) if alg is None else alg
    return alg


def good_cutoff(alg, grid, R: float, gamma_factor: float = 2.0, C1=None, max_halvings: int = 4) -> CutoffFunction:
    """Heat-smoothed cut-off ``rho(P_{t_R} psi_0)`` with ``t_R = C1 R^2``.

    ``C1`` defaults to ``min(1/(8 kappa), 1/(64 C0 d))`` with ``C0`` measured on
    ``psi_0``.  If the evolved profile leaves the bands ``[3/4, 1]`` on ``B_R``
    or ``[0, 1/4]`` outside ``B_(gamma R)``, ``C1`` is halved (at most
    ``max_halvings`` times) before giving up.
    """
    alg = _algebra_for(alg, grid)
    cd: CdParams = cd_parameters(alg)
    psi0 = coarse_cutoff(alg, grid, R, gamma_factor)
    C0 = gradient_constant(alg, psi0, R)
    if C1 is None:
        C1 = 1.0 / (64 * C0 * cd.d)
        if cd.kappa > 0:
            C1 = min(C1, 1.0 / (8 * cd.kappa))
    N = _norms(alg, psi0)
    inner, outer = N <= R, N >= gamma_factor * R
    operator = None if isinstance(grid, RadialGrid) else FlowLaplacian(alg, grid)
    for halvings in range(max_halvings + 1):
        t_R = C1 * R**2
        run = heat_evolve(alg, psi0, t_R, operator=operator)
        psi = run.final.values
        if psi[inner].min() >= 0.75 and psi[outer].max() <= 0.25:
            break
        C1 /= 2
    else:
        raise RuntimeError(f"cut-off bands still violated after {max_halvings} halvings of C1")
    phi = _same_kind(psi0, np.clip(rising_ramp(psi, 0.25, 0.75), 0.0, 1.0))
    nu = (R / 2) ** 2
    _, _, lap = _forms(alg, phi)
    mask = _measure_mask(phi)
    return CutoffFunction(
        field=phi,
        R=R,
        gamma_factor=gamma_factor,
        t_R=t_R,
        nu=nu,
        A=-cd.kappa / nu,
        C0=C0,
        C1=C1,
        halvings=halvings,
        laplacian_constant=float((np.abs(lap) * R**2)[mask].max()),
        gradient_constant=gradient_constant(alg, phi, R),
        support_radius=float(N[phi.values > 0].max()) if (phi.values > 0).any() else 0.0,
        sponge_touched=run.sponge_touched,
        mass_drift=run.mass_drift,
    )


# -- gradient bound under the semigroup -----------------------------------------------------


@dataclass
class GradientBoundReport:
    margin: float
    t: float
    nu: float
    A: float
    coefficient: float
    h: float
    lhs_max: float
    rhs_max: float
    sponge_touched: bool

    def row(self) -> dict:
        return {"t": self.t, "nu": self.nu, "A": self.A, "h": self.h, "margin": self.margin}


def verify_semigroup_gradient_bound(alg, f, t: float, nu: float, cd: CdParams | None = None) -> GradientBoundReport:
    """Check ``Gamma(P_t f) + nu Gamma^Z(P_t f) + c (L P_t f)^2 <= e^{-2At} P_t(Gamma f + nu Gamma^Z f)``.

    ``A = -kappa/nu`` and ``c = (e^{-2At} - 1)/(-A d)``, read as ``2t/d`` when
    ``A = 0``.  The margin is the minimum of RHS - LHS over trusted nodes.
    """
    if isinstance(f, RadialField):
        alg = _algebra_for(alg, f.grid)
    cd = cd if cd is not None else cd_parameters(alg)
    A = min(-cd.kappa / nu, cd.rho2 / nu)
    coefficient = 2 * t / cd.d if A == 0 else math.expm1(-2 * A * t) / (-A * cd.d)
    g0, gz0, _ = _forms(alg, f)
    energy = _same_kind(f, g0 + nu * gz0)
    ptf = heat_evolve(alg, f, t)
    pte = heat_evolve(alg, energy, t)
    g, gz, lap = _forms(alg, ptf.final)
    lhs = g + nu * gz + coefficient * lap**2
    rhs = math.exp(-2 * A * t) * pte.final.values
    mask = _measure_mask(f)
    return GradientBoundReport(
        margin=float((rhs - lhs)[mask].min()),
        t=t,
        nu=nu,
        A=A,
        coefficient=coefficient,
        h=_grid_step(f),
        lhs_max=float(lhs[mask].max()),
        rhs_max=float(rhs[mask].max()),
        sponge_touched=ptf.sponge_touched or pte.sponge_touched,
    )


def write_report_csv(path, rows):
    """Write dict rows (e.g. from ``CutoffFunction.row``) to CSV."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
