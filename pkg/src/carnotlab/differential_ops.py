"""Left-invariant fields, the sub-Laplacian, carre du champ forms and their grids.

Two discretizations of the sub-Laplacian live here:

* the *centered* stencil, ``sum a_jl D_jl + sum b_l D_l`` with the polynomial
  coefficients of ``sum_k X_k^2`` expanded in coordinates.  Second order and
  exact on quadratics; used for measuring derivatives of given fields.
* the *flow* stencil, ``sum_k (f(x.he_k) - 2 f(x) + f(x.(-he_k))) / h^2`` with
  the off-grid values obtained by multilinear interpolation.  Its weights are
  nonnegative, so explicit time stepping obeys a discrete maximum principle,
  and its step size limit only involves the horizontal spacing.  Used for time
  evolution.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import sympy

from .stratified_group import StratifiedAlgebra, dilate, multiply

__all__ = [
    "VectorField",
    "GridSpec",
    "GridField",
    "coordinate_symbols",
    "left_invariant_basis",
    "horizontal_fields",
    "vertical_fields",
    "sub_laplacian_apply",
    "sub_laplacian_symbolic",
    "gamma",
    "gamma_Z",
    "grid_derivatives",
    "horizontal_gradient",
    "FlowLaplacian",
    "fd_convergence_report",
    "save_gridfield",
    "load_gridfield",
]


def coordinate_symbols(alg: StratifiedAlgebra):
    return sympy.symbols(f"x0:{alg.total_dim}", real=True)


@dataclass(frozen=True)
class VectorField:
    """``sum_j coeffs[j] * d/dx_j`` with polynomial coefficients."""

    index: int
    layer: int
    coeffs: tuple
    symbols: tuple

    def apply(self, f):
        return sympy.expand(sum(c * sympy.diff(f, s) for c, s in zip(self.coeffs, self.symbols) if c != 0))

    @cached_property
    def _funcs(self):
        return [
            None if c == 0 else sympy.lambdify(self.symbols, sympy.horner(c) if c.free_symbols else c, "numpy")
            for c in self.coeffs
        ]

    def coeff_values(self, coords):
        """Evaluate the coefficients on broadcastable coordinate arrays; ``None`` marks zeros."""
        return [None if fn is None else fn(*coords) for fn in self._funcs]


_BASIS_CACHE: dict = {}


def _alg_key(alg):
    return (alg.strata_dims, alg.entries)


def left_invariant_basis(alg: StratifiedAlgebra) -> list[VectorField]:
    """``X_k f(x) = d/ds f(x . s e_k)`` at ``s = 0`` for every basis direction."""
    key = _alg_key(alg)
    if key not in _BASIS_CACHE:
        xs = coordinate_symbols(alg)
        s = sympy.Symbol("s", real=True)
        n = alg.total_dim
        x = np.array(xs, dtype=object)
        fields = []
        for k in range(n):
            e = np.array([s if j == k else sympy.Integer(0) for j in range(n)], dtype=object)
            prod = multiply(alg, x, e)
            coeffs = tuple(sympy.expand(sympy.diff(sympy.sympify(c), s).subs(s, 0)) for c in prod)
            fields.append(VectorField(k, int(alg.layer_of[k]), coeffs, xs))
        _BASIS_CACHE[key] = fields
    return _BASIS_CACHE[key]


def horizontal_fields(alg):
    return left_invariant_basis(alg)[: alg.horizontal_dim]


def vertical_fields(alg):
    return left_invariant_basis(alg)[alg.horizontal_dim :]


# -- symbolic operators ---------------------------------------------------------


def sub_laplacian_symbolic(alg, f):
    return sympy.expand(sum(X.apply(X.apply(f)) for X in horizontal_fields(alg)))


def _is_symbolic(f):
    return isinstance(f, sympy.Basic)


def gamma(alg, f, g=None):
    """Carre du champ ``sum_k X_k f X_k g`` over the horizontal frame."""
    g = f if g is None else g
    if _is_symbolic(f):
        return sympy.expand(sum(X.apply(f) * X.apply(g) for X in horizontal_fields(alg)))
    if isinstance(f, GridField):
        return _grid_form(alg, f, g, horizontal_fields(alg))
    raise TypeError("gamma expects a sympy expression or a GridField")


def gamma_Z(alg, f, g=None):
    """Vertical form ``sum_m Z_m f Z_m g``; step-2 groups only."""
    if alg.step != 2:
        raise ValueError("gamma_Z is defined for step-2 groups")
    g = f if g is None else g
    if _is_symbolic(f):
        return sympy.expand(sum(Z.apply(f) * Z.apply(g) for Z in vertical_fields(alg)))
    if isinstance(f, GridField):
        return _grid_form(alg, f, g, vertical_fields(alg))
    raise TypeError("gamma_Z expects a sympy expression or a GridField")


# -- grids ------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Origin-centred uniform grid; axis ``j`` has nodes ``h_j * (-N_j..N_j)``."""

    half_nodes: tuple
    spacing: tuple
    periodic: bool = False

    def __post_init__(self):
        if len(self.half_nodes) != len(self.spacing):
            raise ValueError("half_nodes and spacing lengths differ")
        if any(h <= 0 for h in self.spacing) or any(n < 1 for n in self.half_nodes):
            raise ValueError("spacings must be positive and every axis needs nodes")

    @classmethod
    def graded(cls, alg, extent: float, half_nodes, periodic=False):
        """Grid over ``|x_j^(i)| <= extent^i`` with ``half_nodes[i-1]`` nodes per half axis in layer ``i``.

        An int is used for every layer.  Spacing in layer ``i`` is
        ``extent^i / N_i``, so the grid is dilation-consistent: the grid for
        ``lam * extent`` is the image of this one under ``delta_lam``.
        """
        if np.isscalar(half_nodes):
            half_nodes = [int(half_nodes)] * alg.step
        ns = [int(half_nodes[int(layer) - 1]) for layer in alg.layer_of]
        hs = [float(extent) ** int(layer) / n for layer, n in zip(alg.layer_of, ns)]
        return cls(tuple(ns), tuple(hs), periodic)

    @classmethod
    def uniform(cls, half_nodes, spacing, periodic=False):
        return cls(tuple(int(n) for n in half_nodes), tuple(float(h) for h in spacing), periodic)

    @property
    def ndim(self):
        return len(self.spacing)

    @property
    def shape(self):
        return tuple(2 * n + 1 for n in self.half_nodes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def extents(self):
        return tuple(n * h for n, h in zip(self.half_nodes, self.spacing))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        return [h * np.arange(-n, n + 1) for n, h in zip(self.half_nodes, self.spacing)]

    def open_coords(self):
        """Coordinate arrays broadcastable to :attr:`shape`."""
        return np.ix_(*self.axes())

    def points(self):
        """All nodes as an ``(size, ndim)`` array in C order."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1).reshape(-1, self.ndim)

    def interior_mask(self, width: int = 1):
        mask = np.ones(self.shape, dtype=bool)
        if self.periodic:
            return mask
        for ax in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[ax] = slice(0, width)
            mask[tuple(idx)] = False
            idx[ax] = slice(-width, None)
            mask[tuple(idx)] = False
        return mask

    def sponge_mask(self, fraction: float = 0.1):
        """Outermost ``fraction`` of nodes along each axis."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax, n in enumerate(self.shape):
            w = max(1, int(np.ceil(fraction * n)))
            idx = [slice(None)] * self.ndim
            idx[ax] = slice(0, w)
            mask[tuple(idx)] = True
            idx[ax] = slice(n - w, None)
            mask[tuple(idx)] = True
        return mask


@dataclass
class GridField:
    spec: GridSpec
    values: np.ndarray
    valid: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            if self.values.size != self.spec.size:
                raise ValueError(f"{self.values.size} values for a grid of {self.spec.size} nodes")
            self.values = self.values.reshape(self.spec.shape)

    @classmethod
    def from_function(cls, spec: GridSpec, fn):
        """Sample ``fn(points)`` where ``points`` has the coordinates on the last axis."""
        coords = np.broadcast_arrays(*spec.open_coords())
        pts = np.stack(coords, axis=-1)
        return cls(spec, np.broadcast_to(fn(pts), spec.shape).copy())

    @classmethod
    def from_expr(cls, spec: GridSpec, alg, expr):
        fn = sympy.lambdify(coordinate_symbols(alg), expr, "numpy")
        return cls(spec, np.broadcast_to(fn(*spec.open_coords()), spec.shape).astype(float))

    def integral(self):
        return float(self.values.sum() * self.spec.cell_volume)

    def copy(self):
        return GridField(self.spec, self.values.copy(), None if self.valid is None else self.valid.copy())


def _shift(a, axis, k, periodic):
    """``out[i] = a[i + k]`` along ``axis``; zero fill when not periodic."""
    if periodic:
        return np.roll(a, -k, axis=axis)
    out = np.zeros_like(a)
    n = a.shape[axis]
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k >= 0:
        src[axis], dst[axis] = slice(k, n), slice(0, n - k)
    else:
        src[axis], dst[axis] = slice(0, n + k), slice(-k, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def grid_derivatives(f: GridField, order: int = 2):
    """Centered first (and second) differences; keys ``(j,)`` and ``(j, l)``."""
    a, spec = f.values, f.spec
    h, per = spec.spacing, spec.periodic
    out = {}
    plus = [_shift(a, j, 1, per) for j in range(spec.ndim)]
    minus = [_shift(a, j, -1, per) for j in range(spec.ndim)]
    for j in range(spec.ndim):
        out[(j,)] = (plus[j] - minus[j]) / (2 * h[j])
        if order >= 2:
            out[(j, j)] = (plus[j] - 2 * a + minus[j]) / h[j] ** 2
    if order >= 2:
        for j in range(spec.ndim):
            for l in range(j + 1, spec.ndim):
                pp = _shift(plus[j], l, 1, per)
                pm = _shift(plus[j], l, -1, per)
                mp = _shift(minus[j], l, 1, per)
                mm = _shift(minus[j], l, -1, per)
                out[(j, l)] = (pp - pm - mp + mm) / (4 * h[j] * h[l])
    return out


def _apply_field_grid(X: VectorField, derivs, coords):
    total = 0.0
    for j, c in enumerate(X.coeff_values(coords)):
        if c is not None:
            total = total + c * derivs[(j,)]
    return total


def _grid_form(alg, f: GridField, g, fields):
    df = grid_derivatives(f, order=1)
    dg = df if g is None or g is f else grid_derivatives(g, order=1)
    coords = f.spec.open_coords()
    total = np.zeros(f.spec.shape)
    for X in fields:
        total = total + _apply_field_grid(X, df, coords) * _apply_field_grid(X, dg, coords)
    return GridField(f.spec, total, f.spec.interior_mask())


def horizontal_gradient(alg, f: GridField):
    """List of grid arrays ``X_k f`` for the horizontal frame."""
    d = grid_derivatives(f, order=1)
    coords = f.spec.open_coords()
    return [np.broadcast_to(_apply_field_grid(X, d, coords), f.spec.shape) for X in horizontal_fields(alg)]


_OPERATOR_CACHE: dict = {}


def _second_order_coefficients(alg):
    """Symbolic ``a_jl`` (``j <= l``) and ``b_l`` of ``sum_k X_k^2``."""
    key = _alg_key(alg)
    if key not in _OPERATOR_CACHE:
        xs = coordinate_symbols(alg)
        n = alg.total_dim
        a, b = {}, {}
        for X in horizontal_fields(alg):
            for j in range(n):
                for l in range(j, n):
                    c = sympy.expand(X.coeffs[j] * X.coeffs[l] * (1 if j == l else 2))
                    if c != 0:
                        a[(j, l)] = a.get((j, l), 0) + c
                for_l = X.apply(X.coeffs[j])
                if for_l != 0:
                    b[j] = b.get(j, 0) + for_l
        a = {k: sympy.expand(v) for k, v in a.items() if sympy.expand(v) != 0}
        b = {k: sympy.expand(v) for k, v in b.items() if sympy.expand(v) != 0}
        lam = lambda e: sympy.lambdify(xs, sympy.horner(e) if e.free_symbols else e, "numpy")
        _OPERATOR_CACHE[key] = (
            {k: lam(v) for k, v in a.items()},
            {k: lam(v) for k, v in b.items()},
            a,
            b,
        )
    return _OPERATOR_CACHE[key]


def sub_laplacian_apply(alg, f, scheme: str = "centered"):
    """Sub-Laplacian of a sympy expression or a :class:`GridField`.

    Grid results carry ``valid`` = interior mask; boundary values are not
    meaningful.  ``scheme="flow"`` uses the monotone interpolating stencil.
    """
    if _is_symbolic(f):
        return sub_laplacian_symbolic(alg, f)
    if not isinstance(f, GridField):
        raise TypeError("sub_laplacian_apply expects a sympy expression or a GridField")
    spec = f.spec
    if not spec.periodic and min(spec.shape) < 5:
        raise ValueError("grid too small: need at least two interior layers per axis")
    if scheme == "flow":
        op = FlowLaplacian(alg, spec)
        return GridField(spec, op.apply(f.values), spec.interior_mask())
    if scheme != "centered":
        raise ValueError(f"unknown scheme {scheme!r}")
    fa, fb, _, _ = _second_order_coefficients(alg)
    d = grid_derivatives(f, order=2)
    coords = spec.open_coords()
    out = np.zeros(spec.shape)
    for key, fn in fa.items():
        j, l = key
        out = out + fn(*coords) * d[(j, l) if j != l else (j, j)]
    for l, fn in fb.items():
        out = out + fn(*coords) * d[(l,)]
    return GridField(spec, out, spec.interior_mask())


class FlowLaplacian:
    """Sparse matrix of the monotone flow stencil on a grid.

    Row ``x`` gathers ``f(x . (+-h_k e_k))`` by multilinear interpolation in
    the coordinates of layers ``>= 2``.  Out-of-grid corners are dropped
    (zero exterior) unless the grid is periodic.
    """

    def __init__(self, alg: StratifiedAlgebra, spec: GridSpec):
        self.alg, self.spec = alg, spec
        self.matrix = self._assemble()

    def _assemble(self):
        alg, spec = self.alg, self.spec
        shape = np.array(spec.shape)
        hs = np.array(spec.spacing)
        ns = np.array(spec.half_nodes)
        pts = spec.points()
        size = spec.size
        rows_all, cols_all, vals_all = [], [], []
        diag = np.zeros(size)
        frac_axes = [j for j in range(alg.total_dim) if alg.layer_of[j] > 1]
        strides = np.array([int(np.prod(shape[j + 1 :])) for j in range(len(shape))])
        base_idx = np.rint(pts / hs + ns).astype(np.int64)
        for k in range(alg.horizontal_dim):
            hk = hs[k]
            for sign in (1.0, -1.0):
                e = np.zeros(alg.total_dim)
                e[k] = sign * hk
                tgt = multiply(alg, pts, e) / hs + ns
                idx = base_idx.copy()
                idx[:, k] += int(sign)
                lo = {}
                w = {}
                for j in frac_axes:
                    fl = np.floor(tgt[:, j])
                    lo[j] = fl.astype(np.int64)
                    w[j] = tgt[:, j] - fl
                for corner in product((0, 1), repeat=len(frac_axes)):
                    cidx = idx.copy()
                    wt = np.full(size, 1.0 / hk**2)
                    for bit, j in zip(corner, frac_axes):
                        cidx[:, j] = lo[j] + bit
                        wt = wt * (w[j] if bit else 1.0 - w[j])
                    if spec.periodic:
                        cidx %= shape
                        ok = wt != 0
                    else:
                        ok = np.all((cidx >= 0) & (cidx < shape), axis=1) & (wt != 0)
                    rows_all.append(np.flatnonzero(ok))
                    cols_all.append(cidx[ok] @ strides)
                    vals_all.append(wt[ok])
                diag -= 1.0 / hk**2
        rows_all.append(np.arange(size))
        cols_all.append(np.arange(size))
        vals_all.append(diag)
        m = sp.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))), shape=(size, size)
        )
        return m.tocsr()

    def apply(self, u):
        u = np.asarray(u)
        return (self.matrix @ u.reshape(-1)).reshape(u.shape)

    @cached_property
    def weight_sum(self) -> float:
        """Largest row sum of absolute weights."""
        return float(np.abs(self.matrix).sum(axis=1).max())

    @property
    def h_min(self) -> float:
        return min(self.spec.spacing[: self.alg.horizontal_dim])

    @property
    def sigma_stencil(self) -> float:
        """Dimensionless stencil weight sum, in units of ``1 / h_min^2``."""
        return self.weight_sum * self.h_min**2

    def parabolic_dt(self) -> float:
        return 0.4 * self.h_min**2 / self.sigma_stencil

    def hyperbolic_dt(self) -> float:
        return 0.5 * self.h_min / np.sqrt(self.sigma_stencil)


def fd_convergence_report(alg, f, specs, scheme: str = "centered", region: float = 0.5):
    """Max error of the discrete sub-Laplacian against the symbolic one.

    Errors are measured on nodes with ``|x_j| <= region * extent_j`` so every
    grid in ``specs`` samples the same physical region.  Returns a list of
    dicts with keys ``h``, ``error`` and ``ratio`` (previous error / this error).
    """
    exact_expr = sub_laplacian_symbolic(alg, f)
    rows = []
    prev = None
    for spec in specs:
        fg = GridField.from_expr(spec, alg, f)
        num = sub_laplacian_apply(alg, fg, scheme=scheme)
        ex = GridField.from_expr(spec, alg, exact_expr).values
        mask = num.valid.copy()
        ref = specs[0].extents
        for ax, coord in enumerate(spec.open_coords()):
            mask &= np.broadcast_to(np.abs(coord) <= region * ref[ax] + 1e-12, spec.shape)
        err = float(np.abs(num.values - ex)[mask].max())
        rows.append({"h": spec.spacing[0], "error": err, "ratio": None if prev is None else prev / err if err else np.inf})
        prev = err
    return rows


# -- persistence -----------------------------------------------------------------

_MAGIC = b"CGRIDF01"


def save_gridfield(path, f: GridField):
    """Binary layout: magic, uint32 header length, JSON header, raw float64 values (C order)."""
    header = json.dumps(
        {
            "shape": list(f.spec.shape),
            "half_nodes": list(f.spec.half_nodes),
            "spacing": list(f.spec.spacing),
            "periodic": f.spec.periodic,
            "dtype": "float64",
            "byteorder": "little",
        }
    ).encode()
    data = np.ascontiguousarray(f.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(data.tobytes())


def load_gridfield(path) -> GridField:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path} is not a grid field file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen])
    dtype = np.dtype("<f8" if header.get("byteorder", "little") == "little" else ">f8")
    values = np.frombuffer(raw[12 + hlen :], dtype=dtype).astype(float)
    spec = GridSpec(tuple(header["half_nodes"]), tuple(header["spacing"]), bool(header["periodic"]))
    return GridField(spec, values.reshape(header["shape"]))
