"""
Group law, dilations and balls on Heisenberg groups
===================================================

Points are stored in exponential coordinates, so the product is a truncated
Baker-Campbell-Hausdorff series.  On H^1 the product of (x, y, t) and
(x', y', t') adds the coordinates and corrects the vertical one by half the
symplectic area.
"""

# %%
import numpy as np

from carnotlab import cd_parameters, dilate, heisenberg, hom_norm, inverse, multiply
from carnotlab.stratified_group import ball_volume_mc

H = heisenberg(1)
a, b = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
print("a*b =", multiply(H, a, b))  # (1, 1, 1/2)
print("b*a =", multiply(H, b, a))  # (1, 1, -1/2): the group is not commutative
print("a*a^-1 =", multiply(H, a, inverse(a)))

# %%
# Dilations scale horizontal coordinates by lam and the vertical one by lam^2.
# They are group automorphisms and the homogeneous norm is degree one.
rng = np.random.default_rng(0)
x, y = rng.normal(size=(2, 5, 3))
lam = 3.0
lhs = dilate(H, lam, multiply(H, x, y))
rhs = multiply(H, dilate(H, lam, x), dilate(H, lam, y))
print("automorphism error:", np.abs(lhs - rhs).max())
print("norm ratio:", hom_norm(H, dilate(H, lam, x)) / hom_norm(H, x))

# %%
# Haar measure is Lebesgue measure in these coordinates, so a ball of radius 2R
# has 2^Q times the volume of a ball of radius R, with Q = 4 on H^1.
v1, s1 = ball_volume_mc(H, 1.0, 200_000, seed=1)
v2, s2 = ball_volume_mc(H, 2.0, 200_000, seed=2)
print(f"vol(B_2)/vol(B_1) = {v2 / v1:.3f}  (expect {2 ** H.hom_dim})")

# %%
# Curvature-dimension constants of step-2 groups are extreme eigenvalues of
# two quadratic forms built from the structure constants.
for n in (1, 2, 3):
    c = cd_parameters(heisenberg(n))
    print(f"H^{n}: rho2={c.rho2:g} kappa={c.kappa:g} d={c.d} D={c.bigD:g} Q={heisenberg(n).hom_dim}")
