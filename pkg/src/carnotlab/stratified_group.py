"""Carnot groups in graded exponential coordinates.

A group is described by a :class:`StratifiedAlgebra`: the dimensions of the
strata ``V_1, ..., V_r`` and the nonzero structure constants of the bracket in
a basis adapted to the grading.  Points are plain float arrays whose last axis
holds the coordinates ``(x^(1), ..., x^(r))``; every function here broadcasts
over leading axes.

The group law is the Baker-Campbell-Hausdorff series, which terminates at
degree ``r`` for a nilpotent algebra.  Its rational coefficients are computed
once per step in the free associative algebra on two letters and converted to
right-nested brackets with the Dynkin-Specht-Wever projection.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import sympy

__all__ = [
    "StratifiedAlgebra",
    "CdParams",
    "heisenberg",
    "abelian",
    "engel",
    "random_step2",
    "preset",
    "load_algebra",
    "bch_terms",
    "bracket",
    "multiply",
    "inverse",
    "dilate",
    "hom_norm",
    "hom_norm_power",
    "distance",
    "ball_volume_mc",
    "ball_volume_grid",
    "cd_parameters",
    "sphere_sweep_cd",
]


@dataclass(frozen=True)
class StratifiedAlgebra:
    """Graded nilpotent Lie algebra in an adapted basis.

    ``brackets`` maps ``(i, j)`` (global 0-based basis indices, ``i < j`` not
    required) to a dict ``{m: coefficient}`` so that
    ``[e_i, e_j] = sum_m coefficient * e_m``.  The antisymmetric partner is
    filled in by :meth:`from_constants`.
    """

    strata_dims: tuple[int, ...]
    brackets: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if not self.strata_dims or any(d < 1 for d in self.strata_dims):
            raise ValueError(f"invalid strata dimensions {self.strata_dims}")
        n = self.total_dim
        for (i, j), out in self.brackets.items():
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"bracket index out of range: {(i, j)}")
            back = self.brackets.get((j, i), {})
            for m, c in out.items():
                if not 0 <= m < n:
                    raise ValueError(f"bracket target out of range: {m}")
                if not math.isclose(back.get(m, 0.0), -c, abs_tol=1e-14):
                    raise ValueError(f"structure constants not antisymmetric at {(i, j, m)}")
                a, b, g = self.layer_of[i], self.layer_of[j], self.layer_of[m]
                if c != 0.0 and g != a + b:
                    raise ValueError(
                        f"[V_{a}, V_{b}] must land in V_{a + b}; got component in V_{g}"
                    )

    @classmethod
    def from_constants(cls, strata_dims, constants, name=""):
        """Build from ``(i, j, m, value)`` quadruples, completing antisymmetry."""
        br: dict = {}
        for i, j, m, v in constants:
            i, j, m, v = int(i), int(j), int(m), float(v)
            if i == j:
                if v != 0.0:
                    raise ValueError(f"[e_{i}, e_{i}] must vanish")
                continue
            for key, val in (((i, j), v), ((j, i), -v)):
                row = br.setdefault(key, {})
                if m in row and not math.isclose(row[m], val, abs_tol=1e-14):
                    raise ValueError(f"conflicting structure constant for {key} -> {m}")
                row[m] = val
        br = {k: {m: c for m, c in row.items() if c != 0.0} for k, row in br.items()}
        br = {k: row for k, row in br.items() if row}
        return cls(tuple(int(d) for d in strata_dims), br, name)

    @property
    def step(self) -> int:
        return len(self.strata_dims)

    @property
    def total_dim(self) -> int:
        return sum(self.strata_dims)

    @property
    def hom_dim(self) -> int:
        return sum((i + 1) * d for i, d in enumerate(self.strata_dims))

    @property
    def horizontal_dim(self) -> int:
        return self.strata_dims[0]

    @cached_property
    def layer_of(self) -> np.ndarray:
        """1-based layer index for each coordinate."""
        return np.repeat(np.arange(1, self.step + 1), self.strata_dims)

    @cached_property
    def layer_slices(self) -> tuple[slice, ...]:
        edges = np.concatenate([[0], np.cumsum(self.strata_dims)])
        return tuple(slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))

    @cached_property
    def entries(self) -> tuple[tuple[int, int, int, float], ...]:
        """Flat list of nonzero ``(i, j, m, c)``; both orders of each pair."""
        return tuple(
            (i, j, m, c) for (i, j), row in sorted(self.brackets.items()) for m, c in sorted(row.items())
        )

    @property
    def norm_exponent(self) -> int:
        """The even integer ``2 r!`` used by the homogeneous norm."""
        return 2 * math.factorial(self.step)

    def gamma_tensor(self) -> np.ndarray:
        """Step-2 structure constants ``gamma[i, j, m]`` with ``[X_i, X_j] = sum_m gamma_ij^m Z_m``."""
        if self.step != 2:
            raise ValueError("gamma tensor is defined for step-2 algebras only")
        d, h = self.strata_dims
        g = np.zeros((d, d, h))
        for i, j, m, c in self.entries:
            g[i, j, m - d] = c
        return g

    def is_stratified(self) -> bool:
        """True when ``[V_1, V_{i-1}]`` spans ``V_i`` for every ``i >= 2``."""
        n = self.total_dim
        for layer in range(2, self.step + 1):
            rows = []
            for i in range(self.strata_dims[0]):
                for j in np.flatnonzero(self.layer_of == layer - 1):
                    v = np.zeros(n)
                    for m, c in self.brackets.get((i, int(j)), {}).items():
                        v[m] = c
                    rows.append(v[self.layer_slices[layer - 1]])
            if not rows or np.linalg.matrix_rank(np.array(rows)) < self.strata_dims[layer - 1]:
                return False
        return True

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.total_dim:
            raise ValueError(f"point has {x.shape[-1]} coordinates, algebra has {self.total_dim}")
        return x

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "step": self.step,
            "strata_dims": list(self.strata_dims),
            "brackets": [[i, j, m, c] for i, j, m, c in self.entries if i < j],
        }


@dataclass(frozen=True)
class CdParams:
    rho2: float
    kappa: float
    d: int

    @property
    def bigD(self) -> float:
        return (1.0 + 3.0 * self.kappa / (2.0 * self.rho2)) * self.d


# -- presets -----------------------------------------------------------------


def heisenberg(n: int) -> StratifiedAlgebra:
    """H^n with basis X_1..X_n, Y_1..Y_n, Z and ``[X_i, Y_i] = Z``."""
    if n < 1:
        raise ValueError("heisenberg(n) needs n >= 1")
    consts = [(i, n + i, 2 * n, 1.0) for i in range(n)]
    return StratifiedAlgebra.from_constants((2 * n, 1), consts, name=f"heisenberg-{n}")


def abelian(n: int, strata_dims=None) -> StratifiedAlgebra:
    """R^n as a step-1 group, or with a prescribed (degenerate) grading and zero brackets."""
    dims = tuple(strata_dims) if strata_dims is not None else (n,)
    return StratifiedAlgebra.from_constants(dims, [], name=f"abelian-{n}")


def engel() -> StratifiedAlgebra:
    """Engel group: step 3, strata [2, 1, 1], ``[X1, X2] = X3``, ``[X1, X3] = X4``."""
    return StratifiedAlgebra.from_constants((2, 1, 1), [(0, 1, 2, 1.0), (0, 2, 3, 1.0)], name="engel")


def random_step2(d: int, h: int, seed=None) -> StratifiedAlgebra:
    """Step-2 algebra with Gaussian structure constants ``gamma_ij^m``."""
    rng = np.random.default_rng(seed)
    consts = [
        (i, j, d + m, float(rng.standard_normal()))
        for i in range(d)
        for j in range(i + 1, d)
        for m in range(h)
    ]
    return StratifiedAlgebra.from_constants((d, h), consts, name=f"random-step2-{d}-{h}")


_PRESET = re.compile(r"^(heisenberg|abelian)-(\d+)$")


def preset(name: str) -> StratifiedAlgebra:
    """Resolve ``heisenberg-n``, ``abelian-n`` or ``engel``."""
    if name == "engel":
        return engel()
    m = _PRESET.match(name.strip().lower())
    if not m:
        raise ValueError(f"unknown preset {name!r}")
    kind, n = m.group(1), int(m.group(2))
    return heisenberg(n) if kind == "heisenberg" else abelian(n)


def load_algebra(path) -> StratifiedAlgebra:
    """Read an algebra from JSON.

    Either ``{"preset": "heisenberg-2"}`` or
    ``{"step": 2, "strata_dims": [2, 1], "brackets": [[0, 1, 2, 1.0]]}`` with
    0-based global indices; each quadruple ``(i, j, m, c)`` means
    ``[e_i, e_j]`` has coefficient ``c`` on ``e_m``.
    """
    data = json.loads(Path(path).read_text())
    if "preset" in data:
        return preset(data["preset"])
    dims = data["strata_dims"]
    if "step" in data and int(data["step"]) != len(dims):
        raise ValueError("step does not match the number of strata")
    return StratifiedAlgebra.from_constants(dims, data.get("brackets", []), name=data.get("name", ""))


# -- BCH ---------------------------------------------------------------------


def _mul(a: dict, b: dict, degree: int) -> dict:
    out: dict = {}
    for wa, ca in a.items():
        for wb, cb in b.items():
            if len(wa) + len(wb) <= degree:
                w = wa + wb
                out[w] = out.get(w, 0) + ca * cb
    return out


@lru_cache(maxsize=None)
def bch_terms(degree: int) -> tuple[tuple[tuple[int, ...], Fraction], ...]:
    """Words and coefficients of ``log(exp X exp Y)`` truncated at ``degree``.

    Letters are 0 (X) and 1 (Y).  Each returned ``(word, c)`` contributes
    ``c * [w_1, [w_2, ..., [w_{k-1}, w_k]]]``; the ``1/k`` Dynkin factor is
    already folded in.  Degree-1 words stand for the letters themselves.
    """
    one = {(): Fraction(1)}

    def exp_letter(letter):
        out, term = dict(one), dict(one)
        for k in range(1, degree + 1):
            term = _mul(term, {(letter,): Fraction(1, k)}, degree)
            for w, c in term.items():
                out[w] = out.get(w, 0) + c
        return out

    prod = _mul(exp_letter(0), exp_letter(1), degree)
    w_ = {w: c for w, c in prod.items() if w}
    log: dict = {}
    power = dict(one)
    for k in range(1, degree + 1):
        power = _mul(power, w_, degree)
        sign = Fraction((-1) ** (k + 1), k)
        for w, c in power.items():
            log[w] = log.get(w, 0) + sign * c
    terms = []
    for w, c in sorted(log.items(), key=lambda kv: (len(kv[0]), kv[0])):
        if c == 0:
            continue
        k = len(w)
        if k > 1 and w[-1] == w[-2]:
            continue  # innermost [a, a] vanishes
        terms.append((w, c / k))
    return tuple(terms)


def bracket(alg: StratifiedAlgebra, a, b):
    """Lie bracket along the last axis; works on float or sympy object arrays."""
    out = np.zeros(np.broadcast_shapes(np.shape(a), np.shape(b)), dtype=np.result_type(a, b))
    symbolic = out.dtype == object
    for i, j, m, c in alg.entries:
        if symbolic:
            c = sympy.Rational(c)
        out[..., m] = out[..., m] + c * a[..., i] * b[..., j]
    return out


def multiply(alg: StratifiedAlgebra, x, y):
    """Group product ``exp^{-1}(exp(x) exp(y))`` in exponential coordinates."""
    if np.asarray(x).dtype != object:
        x, y = alg.check_point(x), alg.check_point(y)
    letters = (x, y)
    out = x + y
    for word, c in bch_terms(alg.step):
        if len(word) == 1:
            continue
        v = letters[word[-1]]
        for letter in reversed(word[:-1]):
            v = bracket(alg, letters[letter], v)
        coef = c.numerator / c.denominator if out.dtype != object else sympy.Rational(c.numerator, c.denominator)
        out = out + coef * v
    return out


def inverse(x):
    """Inverse element; in exponential coordinates this is negation."""
    return -np.asarray(x)


def _check_lambda(lam):
    if not np.all(np.asarray(lam) > 0):
        raise ValueError("dilation factor must be positive")


def dilate(alg: StratifiedAlgebra, lam, x):
    _check_lambda(lam)
    x = np.asarray(x)
    lam = np.asarray(lam, dtype=float)[..., None]
    return x * lam ** alg.layer_of


def hom_norm_power(alg: StratifiedAlgebra, x):
    """``|x|_G^{2 r!}``, a polynomial in the coordinates."""
    x = np.asarray(x)
    e = math.factorial(alg.step)
    total = 0
    for i, sl in enumerate(alg.layer_slices, start=1):
        sq = (x[..., sl] ** 2).sum(axis=-1)
        total = total + sq ** (e // i)
    return total


def hom_norm(alg: StratifiedAlgebra, x):
    x = alg.check_point(x)
    return hom_norm_power(alg, x) ** (1.0 / alg.norm_exponent)


def distance(alg: StratifiedAlgebra, x, y):
    """``|y^{-1} x|_G``; left invariant, not symmetric in general."""
    return hom_norm(alg, multiply(alg, inverse(y), x))


# -- volume ------------------------------------------------------------------


def _box_halfwidths(alg, R):
    return float(R) ** alg.layer_of


def ball_volume_mc(alg: StratifiedAlgebra, R: float, samples: int = 10**6, seed=0, block: int = 100_000):
    """Monte Carlo Haar volume of ``{|x|_G < R}``.

    Samples uniformly in the box ``|x_j^(i)| <= R^i``, which contains the ball.
    Blocks get independent child seeds and are summed in order, so the result
    depends only on ``(samples, seed, block)``.  Returns ``(estimate, stderr)``.
    """
    if samples < 10**4:
        raise ValueError("ball_volume_mc needs at least 10^4 samples")
    if R <= 0:
        raise ValueError("radius must be positive")
    half = _box_halfwidths(alg, R)
    box = float(np.prod(2 * half))
    nblocks = -(-samples // block)
    hits = 0
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(nblocks)):
        m = min(block, samples - k * block)
        rng = np.random.default_rng(child)
        pts = rng.uniform(-1.0, 1.0, size=(m, alg.total_dim)) * half
        hits += int(np.count_nonzero(hom_norm_power(alg, pts) < float(R) ** alg.norm_exponent))
    frac = hits / samples
    return box * frac, box * math.sqrt(frac * (1 - frac) / samples)


def ball_volume_grid(alg: StratifiedAlgebra, R: float = 1.0, resolution: int = 200, chunk: int = 2_000_000):
    """Midpoint-rule volume of the norm ball on a ``resolution^n`` grid over the bounding box."""
    half = _box_halfwidths(alg, R)
    n = alg.total_dim
    axes = [(np.arange(resolution) + 0.5) / resolution * 2 - 1 for _ in range(n)]
    cell = float(np.prod(2 * half)) / resolution**n
    thresh = float(R) ** alg.norm_exponent
    # iterate over the first axis to bound memory
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, n - 1) * half[1:]
    count = 0
    for a in axes[0]:
        pts = np.empty((rest.shape[0], n))
        pts[:, 0] = a * half[0]
        pts[:, 1:] = rest
        count += int(np.count_nonzero(hom_norm_power(alg, pts) < thresh))
    return count * cell


# -- curvature-dimension parameters -------------------------------------------


def _cd_forms(alg):
    if alg.step != 2:
        raise ValueError("cd_parameters needs a step-2 algebra")
    g = alg.gamma_tensor()
    d, h = alg.strata_dims
    rho_form = 0.25 * np.einsum("ijm,ijn->mn", g, g)
    # (sum_i gamma_ij^m x_i)^2 summed over j, m
    kappa_form = np.einsum("ijm,kjm->ik", g, g)
    return rho_form, kappa_form


def cd_parameters(alg: StratifiedAlgebra) -> CdParams:
    """``rho_2``, ``kappa`` of a step-2 group as extreme Rayleigh quotients."""
    rho_form, kappa_form = _cd_forms(alg)
    rho2 = float(np.linalg.eigvalsh(rho_form)[0])
    kappa = float(np.linalg.eigvalsh(kappa_form)[-1])
    if not rho2 > 1e-14:
        raise ValueError(f"rho_2 = {rho2:g}; the CD(0, rho_2, kappa, d) bound needs rho_2 > 0")
    return CdParams(rho2=rho2, kappa=kappa, d=alg.horizontal_dim)


def sphere_sweep_cd(alg: StratifiedAlgebra, samples: int = 20000, seed=0) -> tuple[float, float]:
    """Brute-force ``(rho_2, kappa)`` by evaluating the defining sums on unit vectors.

    Independent of :func:`cd_parameters`: loops the structure constants
    directly instead of forming quadratic forms.  One-dimensional spheres are
    the two points ``+-1``; two-dimensional ones use an angle sweep.
    """
    g = alg.gamma_tensor()
    d, h = alg.strata_dims
    rng = np.random.default_rng(seed)

    def unit_vectors(dim):
        if dim == 1:
            return np.array([[1.0], [-1.0]])
        if dim == 2:
            th = np.linspace(0, 2 * np.pi, samples, endpoint=False)
            return np.stack([np.cos(th), np.sin(th)], axis=1)
        v = rng.standard_normal((samples, dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    z = unit_vectors(h)
    rho_vals = np.zeros(len(z))
    for i in range(d):
        for j in range(d):
            s = np.zeros(len(z))
            for m in range(h):
                s += g[i, j, m] * z[:, m]
            rho_vals += s**2
    x = unit_vectors(d)
    kappa_vals = np.zeros(len(x))
    for j in range(d):
        for m in range(h):
            s = np.zeros(len(x))
            for i in range(d):
                s += g[i, j, m] * x[:, i]
            kappa_vals += s**2
    return float(0.25 * rho_vals.min()), float(kappa_vals.max())
