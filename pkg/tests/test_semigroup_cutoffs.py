import numpy as np
import pytest

from carnotlab import heisenberg
from carnotlab.differential_ops import GridField, GridSpec
from carnotlab.radial import RadialGrid
from carnotlab.semigroup_cutoffs import (
    coarse_cutoff,
    good_cutoff,
    heat_evolve,
    verify_semigroup_gradient_bound,
)

H = heisenberg(1)


def radial(r_max=9.0, t_max=10.0, h=1 / 8):
    return RadialGrid.covering(1, r_max, t_max, h, h)


def test_zero_data_stays_zero():
    g = radial()
    run = heat_evolve(None, g.sample(lambda r, t: 0 * r), 0.5)
    assert np.all(run.final.values == 0)
    spec = GridSpec.graded(H, 2.0, (8, 32))
    run = heat_evolve(H, GridField(spec, np.zeros(spec.shape)), 0.1)
    assert np.all(run.final.values == 0)


def test_mass_and_maximum_principle():
    g = radial()
    u0 = g.sample(lambda r, t: np.exp(-2 * r**2 - 2 * t**2))
    run = heat_evolve(None, u0, 0.5, snapshot_times=(0.1, 0.25))
    assert not run.sponge_touched
    assert run.mass_drift < 1e-6
    assert run.max_principle_ok
    # sup norm is nonincreasing along the flow
    sups = [run.snapshots[s].values.max() for s in (0.1, 0.25)] + [run.final.values.max()]
    assert u0.values.max() >= sups[0] >= sups[1] >= sups[2]


def test_flow_grid_heat_keeps_mass():
    spec = GridSpec.graded(H, 3.0, (12, 48))
    pts = spec.points()
    u0 = GridField(spec, np.exp(-3 * (pts**2).sum(1)).reshape(spec.shape))
    run = heat_evolve(H, u0, 0.05)
    assert run.mass_drift < 1e-6
    assert run.max_principle_ok
    assert run.final.values.min() >= -1e-12


def test_cfl_violation_raises():
    g = radial()
    u0 = g.sample(lambda r, t: np.exp(-r**2 - t**2))
    with pytest.raises(ValueError, match="CFL"):
        heat_evolve(None, u0, 0.1, dt=10 * g.parabolic_dt())


def test_sup_decays_like_homogeneous_dimension():
    # a heat kernel on H^1 decays like t^(-Q/2) = t^(-2); one decade of time
    g = RadialGrid.covering(1, 24, 80, 0.25, 0.25)
    u0 = g.sample(lambda r, t: np.exp(-r**2 - t**2))
    run = heat_evolve(None, u0, 40, snapshot_times=(4, 40), sponge_tol=1e-6)
    slope = np.log10(run.snapshots[40].values.max() / run.snapshots[4].values.max())
    assert abs(slope + 2) <= 0.2


def test_coarse_cutoff_values():
    g = radial(12, 80, 1 / 8)
    psi = coarse_cutoff(None, g, 2.0)
    N = g.hom_norm()
    assert np.all(psi.values[N <= 2] == 1)
    assert np.all(psi.values[N >= 4] == 0)
    assert psi.values.min() >= 0 and psi.values.max() <= 1


def test_cutoff_needs_room():
    with pytest.raises(ValueError, match="too large"):
        coarse_cutoff(None, radial(), 6.0)


@pytest.mark.parametrize("R", [2.0, 4.0])
def test_good_cutoff_bands(R):
    g = RadialGrid(1, 96, 3 * R / 96, 384, 2 * 1.5 * (3 * R) ** 2 / 384)
    cut = good_cutoff(None, g, R)
    phi = cut.field.values
    N = g.hom_norm()
    assert phi.min() >= 0 and phi.max() <= 1
    assert np.all(phi[N <= R] >= 0.99)
    assert np.all(phi[N >= 2 * R] == 0)
    assert not cut.sponge_touched
    assert cut.laplacian_constant > 0 and cut.gradient_constant > 0


def test_good_cutoff_constants_scale_free():
    consts = []
    for R in (2.0, 4.0):
        g = RadialGrid(1, 96, 3 * R / 96, 384, 2 * 1.5 * (3 * R) ** 2 / 384)
        cut = good_cutoff(None, g, R)
        consts.append((cut.laplacian_constant, cut.gradient_constant))
    # grids scaled by the dilation give identical dimensionless constants
    assert np.allclose(consts[0], consts[1], rtol=1e-8)


def test_gradient_bound_trivial_and_positive():
    g = radial()
    zero = verify_semigroup_gradient_bound(None, g.sample(lambda r, t: 0 * r), 0.1, 1.0)
    assert zero.margin == 0
    rep = verify_semigroup_gradient_bound(None, g.sample(lambda r, t: np.exp(-r**2 - t**2)), 0.1, 1.0)
    assert rep.margin >= -1e-4
    assert not rep.sponge_touched
