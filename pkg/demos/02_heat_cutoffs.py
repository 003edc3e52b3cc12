"""
Heat flow and smooth cut-offs on H^1
====================================

Radial functions on H^1 depend on r = |(x, y)| and t only.  For them the
sub-Laplacian reduces to a two-variable operator, which makes the heat flow
cheap enough to run on large balls.
"""

# %%
import numpy as np

from carnotlab import heisenberg
from carnotlab.experiments import cutoff_grid
from carnotlab.radial import RadialGrid
from carnotlab.semigroup_cutoffs import good_cutoff, heat_evolve, verify_semigroup_gradient_bound

g = RadialGrid.covering(1, 9.0, 10.0, 1 / 8, 1 / 8)
u0 = g.sample(lambda r, t: np.exp(-2 * r**2 - 2 * t**2))
run = heat_evolve(None, u0, 0.5, snapshot_times=(0.1, 0.25))
print("mass drift:", run.mass_drift, " max principle:", run.max_principle_ok)
for s, f in sorted(run.snapshots.items()):
    print(f"sup u({s}) = {f.values.max():.4f}")

# %%
# The rough cut-off eta(|x|/R) has a kink where the ramp starts.  Running the
# heat flow for a time proportional to R^2 and re-flattening gives a cut-off
# whose sub-Laplacian and gradients are O(1/R^2) with R-free constants.
for R in (4, 8, 16):
    grid = cutoff_grid(heisenberg(1), R)
    cut = good_cutoff(None, grid, R)
    print(f"R={R:>2}: t_R={cut.t_R:8.4f}  sup|L phi| R^2 = {cut.laplacian_constant:.2f}"
          f"  sup(Gamma + (R/2)^2 Gamma_Z) R^2 = {cut.gradient_constant:.2f}")

# %%
# Pointwise gradient bound along the semigroup: the margin RHS - LHS should be
# nonnegative up to round-off.
for h in (1 / 16, 1 / 32):
    grid = RadialGrid.covering(1, 9.0, 10.0, h, h)
    rep = verify_semigroup_gradient_bound(None, grid.sample(lambda r, t: np.exp(-r**2 - t**2)), 0.1, 1.0)
    print(f"h={h:.4f}: margin {rep.margin:.2e}")
