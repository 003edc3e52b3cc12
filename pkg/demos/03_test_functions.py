"""
Test functions for the nonexistence argument
============================================

The bump g = eta^ell with ell = 2p/(p-1) has derivatives dominated by
g^(1/p).  Composed with a homogeneous gauge it gives space-time test
functions whose operator bounds scale like R^-2.
"""

# %%
import numpy as np

from carnotlab import abelian, heisenberg
from carnotlab.experiments import cutoff_grid
from carnotlab.testfunctions import (
    euclidean_wave_constant,
    graded_wave_estimate_audit,
    log_integral_check,
    make_bump,
    product_testfn_audit,
)

H = heisenberg(1)
for p in (1.5, 5 / 3, 2.0):
    b = make_bump(p)
    print(f"p={p:.3f}: ell={b.ell:.2f}, C_g={b.C_g:.1f}")

# %%
# On the graded gauge (t^4 + |x|^4)/R^4 the wave operator of the bump,
# divided by the bump^(1/p), is R-independent after multiplying by R^2.
out = graded_wave_estimate_audit(H, 1.5, [4, 8, 16])
for r in out["rows"]:
    print(f"R={r['R']:>4}: K={r['constant']:.1f}  stencil check err {r['fd_error']:.2g}")
print("spread:", out["ratio"])

# In flat space the same constant has a one-variable formula.
flat = graded_wave_estimate_audit(abelian(2), 1.5, [4, 8])
print("flat audit", flat["rows"][0]["constant"], "oracle", euclidean_wave_constant(1.5, 2))

# %%
# Product test functions (tau(t/T) phi_R(x))^alpha, with phi_R the heat-smoothed cut-off.
for kind in ("parabolic", "hyperbolic"):
    a = product_testfn_audit(H, kind, 1.5, [4, 8, 16], lambda R: cutoff_grid(H, R))
    print(kind, [(r["R"], round(r["C_space"], 1), round(r["C_time"], 2)) for r in a["rows"]])

# %%
# The logarithmic integral of f(A / rho^h) is bounded by ln2/h times the
# decreasing majorant of f at A/R^h.  The bound fails if f itself replaces the majorant.
b = make_bump(2.0)
f = lambda s: np.where(np.asarray(s) >= 0.5, b(s), 0.0)
print("majorant:", log_integral_check(f, 1.0, 4.0, 2.0))
print("pointwise:", log_integral_check(f, 1.0, 4.0, 2.0, pointwise=True))
