import numpy as np
import pytest

from carnotlab import abelian, dilate, heisenberg
from carnotlab.experiments import cutoff_grid
from carnotlab.radial import RadialGrid
from carnotlab.semilinear import ProblemSpec, default_bump, record_trajectory
from carnotlab.testfunctions import (
    euclidean_wave_constant,
    graded_wave_estimate_audit,
    log_integral_check,
    make_bump,
    product_testfn,
    product_testfn_audit,
    s_R_eval,
    test_power,
    weak_form_residual,
)

H = heisenberg(1)


def test_power_values():
    assert test_power(1.5) == 6
    assert test_power(2) == 4
    with pytest.raises(ValueError):
        test_power(1.0)


def test_bump_shape_and_derivatives():
    b = make_bump(1.5)
    s = np.linspace(0, 1.5, 3001)
    g = b(s)
    assert np.all(g[s <= 0.5] == 1) and np.all(g[s >= 1] == 0)
    assert np.all(np.diff(g) <= 0)
    h = 1e-5
    mid = np.linspace(0.55, 0.95, 41)
    assert np.allclose((b(mid + h) - b(mid - h)) / (2 * h), b(mid, 1), atol=1e-6)
    assert np.allclose((b(mid + h, 1) - b(mid - h, 1)) / (2 * h), b(mid, 2), atol=1e-4)


def test_bump_constant_is_sampling_stable():
    a = make_bump(1.5, samples=100_000).C_g
    b = make_bump(1.5, samples=200_000).C_g
    assert abs(a - b) <= 1e-3 * b
    s = np.linspace(0.5, 1, 10001)
    assert make_bump(1.5).domination_ratio(s).max() <= 1.0001 * b


def test_s_R_is_dilation_invariant():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(50, 3))
    t = rng.normal(size=50)
    lam = 2.7
    a = s_R_eval(H, 1.0, t, x)
    b = s_R_eval(H, lam, lam * t, dilate(H, lam, x))
    assert np.allclose(a, b, rtol=1e-12)


def test_graded_audit_bounded_on_heisenberg():
    out = graded_wave_estimate_audit(H, 1.5, [4, 8, 16])
    assert out["ratio"] <= 1.3
    assert all(r["fd_error"] <= 0.1 * r["constant"] for r in out["rows"])


def test_graded_audit_matches_euclidean_oracle():
    out = graded_wave_estimate_audit(abelian(2), 1.5, [4, 8])
    K = max(r["constant"] for r in out["rows"])
    oracle = euclidean_wave_constant(1.5, 2)
    assert abs(K - oracle) <= 0.05 * oracle


@pytest.mark.parametrize("kind", ["parabolic", "hyperbolic"])
def test_product_audit_constants(kind):
    out = product_testfn_audit(H, kind, 1.5, [4, 8, 16], lambda R: cutoff_grid(H, R))
    assert all(r["alpha"] == 6 for r in out["rows"])
    assert out["C_space_ratio"] <= 1.5 and out["C_time_ratio"] <= 1.5
    assert all(r["annulus_ok"] and r["slab_ok"] for r in out["rows"])


def test_integral_inequality_with_majorant():
    f = make_bump(1.5)
    bump = lambda s: np.where(np.asarray(s) > 0.5, f(np.asarray(s)), 0.0)
    for A, h, R in [(1, 4, 2), (0.3, 1, 5), (50, 2, 10), (0.01, 0.5, 0.1)]:
        lhs, rhs, margin = log_integral_check(bump, A, h, R)
        assert margin >= -1e-9, (A, h, R, lhs, rhs)


def test_pointwise_form_fails_below_half():
    f = make_bump(1.5)
    bump = lambda s: np.where(np.asarray(s) > 0.5, f(np.asarray(s)), 0.0)
    # A / R^h = 1/16 < 1/2: f vanishes there but the integral does not
    _, _, margin = log_integral_check(bump, 1, 4, 2, pointwise=True)
    assert margin < 0


def test_weak_residual_of_solver_output():
    g = RadialGrid(1, 48, 1 / 8, 192, 1 / 8)
    R = 1.5
    fn = product_testfn(H, g, "parabolic", 1.3, R)
    prob = ProblemSpec("parabolic", None, g, 1.3, default_bump(None, g), 0.5, 10.0)
    traj = record_trajectory(prob, 2 * R * R)
    res, scale = weak_form_residual(H, traj, fn, "parabolic", 1.3)
    assert abs(res) <= 1e-3 * scale
    # the sign of the source matters: flipping it leaves an O(scale) residual
    flipped, _ = weak_form_residual(H, traj, fn, "parabolic", 1.3, nonlinear_sign=-1.0)
    assert abs(flipped) > 0.5 * scale
