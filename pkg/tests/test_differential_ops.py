import numpy as np
import pytest
import sympy

from carnotlab.differential_ops import (
    FlowLaplacian,
    GridField,
    GridSpec,
    coordinate_symbols,
    fd_convergence_report,
    gamma,
    gamma_Z,
    horizontal_fields,
    left_invariant_basis,
    load_gridfield,
    save_gridfield,
    sub_laplacian_apply,
)
from carnotlab.stratified_group import abelian, dilate, engel, heisenberg

H = heisenberg(1)
x, y, t = coordinate_symbols(H)


def test_heisenberg_frame():
    X1, X2, Z = left_invariant_basis(H)
    assert X1.coeffs == (1, 0, -y / 2)
    assert X2.coeffs == (0, 1, x / 2)
    assert Z.coeffs == (0, 0, 1)


def test_abelian_frame_is_coordinate_partials():
    A = abelian(3)
    for k, X in enumerate(left_invariant_basis(A)):
        assert X.coeffs == tuple(int(j == k) for j in range(3))


@pytest.mark.parametrize("alg", [H, engel()], ids=["H1", "engel"])
def test_horizontal_fields_are_homogeneous_of_degree_one(alg):
    xs = coordinate_symbols(alg)
    lam = sympy.Rational(3, 2)
    phi = sympy.sin(xs[0]) * xs[-1] + xs[1] ** 2 * xs[-1] ** 2
    scaled = dict(zip(xs, dilate(alg, lam, np.array(xs, dtype=object))))
    for X in horizontal_fields(alg):
        lhs = X.apply(phi.subs(scaled, simultaneous=True))
        rhs = lam * X.apply(phi).subs(scaled, simultaneous=True)
        assert sympy.simplify(lhs - rhs) == 0


def test_symbolic_operators_on_simple_functions():
    assert sub_laplacian_apply(H, sympy.Integer(7)) == 0
    assert sub_laplacian_apply(H, x**2 + y**2) == 4
    assert gamma(H, x) == 1
    assert gamma_Z(H, t) == 1
    assert gamma(H, t) == (x**2 + y**2) / 4
    with pytest.raises(ValueError):
        gamma_Z(engel(), sympy.Symbol("x0"))


def test_sub_laplacian_scales_by_lambda_squared():
    f = x**2 * t + y**4 + x * y * t**2
    lam = sympy.Rational(5, 3)
    sub = {x: lam * x, y: lam * y, t: lam**2 * t}
    lhs = sub_laplacian_apply(H, f.subs(sub, simultaneous=True))
    rhs = lam**2 * sub_laplacian_apply(H, f).subs(sub, simultaneous=True)
    assert sympy.expand(lhs - rhs) == 0


def test_grid_stencil_is_exact_on_quadratics():
    spec = GridSpec.uniform((6, 6, 6), (0.3, 0.3, 0.2))
    f = GridField.from_expr(spec, H, x**2 + 3 * y**2 + x * t)
    out = sub_laplacian_apply(H, f)
    exact = GridField.from_expr(spec, H, sub_laplacian_apply(H, x**2 + 3 * y**2 + x * t)).values
    assert np.abs(out.values - exact)[out.valid].max() < 1e-9


@pytest.mark.parametrize("scheme", ["centered", "flow"])
def test_second_order_convergence(scheme):
    f = sympy.cos(x) * sympy.cos(y) * sympy.exp(-(t**2) / 4)
    specs = [GridSpec.uniform((n, n, 2 * n), (2.0 / n, 2.0 / n, 4.0 / n**2 * n / 2)) for n in (8, 16, 32)]
    if scheme == "flow":
        # vertical spacing must shrink like h^2 for the interpolated shifts to stay consistent
        specs = [GridSpec.uniform((n, n, n * n // 4), (2.0 / n, 2.0 / n, 8.0 / n**2)) for n in (8, 16, 32)]
    rows = fd_convergence_report(H, f, specs, scheme=scheme)
    assert 3.5 <= rows[-1]["ratio"] <= 4.5


def test_discrete_operators_are_symmetric():
    spec = GridSpec.uniform((12, 12, 24), (0.25, 0.25, 0.125))
    rng = np.random.default_rng(0)
    bump = lambda p: np.exp(-2 * (p[..., 0] ** 2 + p[..., 1] ** 2) - p[..., 2] ** 2)
    f = GridField.from_function(spec, lambda p: bump(p) * (1 + p[..., 0]))
    g = GridField.from_function(spec, lambda p: bump(p - 0.3) * np.cos(p[..., 2]))
    for scheme in ("centered", "flow"):
        lf = sub_laplacian_apply(H, f, scheme).values
        lg = sub_laplacian_apply(H, g, scheme).values
        a, b = (g.values * lf).sum(), (f.values * lg).sum()
        assert abs(a - b) <= 1e-8 * max(abs(a), abs(b))


def test_flow_stencil_is_monotone_and_conserves_mass():
    spec = GridSpec.uniform((8, 8, 16), (0.25, 0.25, 0.1), periodic=True)
    op = FlowLaplacian(H, spec)
    m = op.matrix.tocoo()
    off = m.row != m.col
    assert (m.data[off] >= 0).all()
    assert np.allclose(np.asarray(op.matrix.sum(axis=0)).ravel(), 0, atol=1e-9)
    assert op.parabolic_dt() < 1 / (-op.matrix.diagonal()).max()


def test_grid_too_small_is_an_error():
    spec = GridSpec.uniform((1, 1, 1), (0.1, 0.1, 0.1))
    with pytest.raises(ValueError):
        sub_laplacian_apply(H, GridField(spec, np.zeros(spec.shape)))


def test_gridfield_binary_roundtrip(tmp_path):
    spec = GridSpec.graded(H, 2.0, (4, 8))
    f = GridField.from_function(spec, lambda p: p[..., 0] - p[..., 2] ** 2)
    save_gridfield(tmp_path / "f.bin", f)
    g = load_gridfield(tmp_path / "f.bin")
    assert g.spec == f.spec and np.array_equal(g.values, f.values)
    (tmp_path / "bad.bin").write_bytes(b"nope" * 10)
    with pytest.raises(ValueError):
        load_gridfield(tmp_path / "bad.bin")


def test_graded_grid_is_dilation_consistent():
    a, b = GridSpec.graded(H, 2.0, (8, 32)), GridSpec.graded(H, 4.0, (8, 32))
    assert np.allclose(b.spacing, [2 * a.spacing[0], 2 * a.spacing[1], 4 * a.spacing[2]])
