import numpy as np
import pytest

from carnotlab.differential_ops import FlowLaplacian, GridSpec
from carnotlab.radial import RadialField, RadialGrid
from carnotlab.stratified_group import heisenberg


def gaussian(r, t):
    return np.exp(-(r**2) - t**2)


def exact_laplacian(r, t):
    F = gaussian(r, t)
    return F * ((4 * r**2 - 2) - 2 + r**2 / 4 * (4 * t**2 - 2))


def test_reduced_operator_converges_at_second_order():
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        g = RadialGrid.covering(1, 5, 6, h, h)
        rr, tt = g.mesh()
        m = (rr < 3) & (np.abs(tt) < 3)
        errs.append(np.abs(g.laplacian(gaussian(rr, tt)) - exact_laplacian(rr, tt))[m].max())
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_heat_step_conserves_mass_and_positivity():
    g = RadialGrid.covering(2, 6, 10, 1 / 8, 1 / 8)
    u = g.sample(gaussian)
    m0 = u.integral()
    v = u.values
    for _ in range(200):
        v = g.heat_step(v, g.parabolic_dt())
    assert abs(RadialField(g, v).integral() - m0) < 1e-9 * m0
    assert v.min() > -1e-12  # FFT round-off only


def test_radial_reduction_agrees_with_full_grid():
    H = heisenberg(1)
    spec = GridSpec.graded(H, 4.0, (16, 256))
    op = FlowLaplacian(H, spec)
    pts = spec.points()
    rr = np.hypot(pts[:, 0], pts[:, 1])
    full = op.apply(np.exp(-rr**2 / 2 - pts[:, 2] ** 2 / 4))
    g = RadialGrid.covering(1, 4, 16, 1 / 64, 1 / 64)
    red = g.laplacian(g.sample(lambda r, t: np.exp(-r**2 / 2 - t**2 / 4)).values)
    from scipy.interpolate import RegularGridInterpolator

    ip = RegularGridInterpolator((g.r, g.t), red, bounds_error=False, fill_value=None)
    m = (rr < 2) & (np.abs(pts[:, 2]) < 2)
    err = np.abs(ip(np.stack([rr[m], pts[m, 2]], -1)) - full[m]).max()
    assert err < 0.05 * np.abs(full).max()


def test_field_forms_match_closed_forms():
    g = RadialGrid.covering(1, 4, 4, 1 / 64, 1 / 64)
    f = g.sample(lambda r, t: r**2 + t)
    rr, tt = g.mesh()
    inner = (rr < 3) & (np.abs(tt) < 3)
    assert np.allclose(f.gamma()[inner], (4 * rr**2 + rr**2 / 4)[inner], rtol=1e-10)
    assert np.allclose(f.gamma_Z()[inner], 1.0)
    assert np.allclose(f.sub_laplacian()[inner], 4.0)


def test_invalid_grids():
    with pytest.raises(ValueError):
        RadialGrid(1, 8, 0.1, 7, 0.1)
    with pytest.raises(ValueError):
        RadialGrid(0, 8, 0.1, 8, 0.1)
