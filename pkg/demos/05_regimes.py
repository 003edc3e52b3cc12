"""
Critical exponents by group
===========================

Thresholds computed from the homogeneous dimension Q and from the
curvature-dimension constant D, as exact rationals.
"""

# %%
from fractions import Fraction

from carnotlab import heisenberg
from carnotlab.experiments import classify

for n in (1, 2):
    t = classify(heisenberg(n), Fraction(3, 2))
    print(f"H^{n}: Q={t.Q}, D={t.D}")
    for row in t.rows():
        print(f"  {row['equation']:<12} {row['variant']:<6} {row['threshold']:<6} p={row['p']} -> {row['regime']}")

# %%
# The same table from the command line:
#   carnotlab classify --config run.ini --out out/ --preset heisenberg-1
