"""
Lifespan of small solutions on H^1
==================================

u_t = L u + |u|^p with data eps * exp(-|x|^4).  Below the critical exponent
every solution blows up, and the blow-up time grows like a power of 1/eps.
The solver uses the radial reduction and doubles the grid spacing whenever
the solution reaches the outer half of the grid, so long lifespans stay cheap.

Set FULL = True for the acceptance-size sweep (about half an hour on one core).
"""

# %%
import numpy as np

from carnotlab import heisenberg
from carnotlab.cli import sweep_template
from carnotlab.semilinear import fit_lifespan_exponent, lifespan_sweep, ode_blowup_time

FULL = False
H = heisenberg(1)

# %%
# Uniform data is an ODE: u' = u^p blows up at u0^(1-p)/(p-1).
print("ODE blow-up time, p=2, u0=2:", ode_blowup_time("parabolic", 2.0, 2.0))

# %%
sec = {"kind": "parabolic", "p": "1.3"}
if not FULL:
    sec.update(nr="64", nt="256")
amps = np.logspace(-3.5, -2, 6) if FULL else np.logspace(-2, -1, 5)
out = lifespan_sweep(sweep_template(H, sec), amps)
for r in out["records"]:
    print(f"eps={r.amplitude:.2e}  T={r.T_measured:9.2f}  dt-gap={r.refinement_gap:.1%}  regrids={r.regrids}")

fit = fit_lifespan_exponent(out["records"], H)
print(f"fitted slope {fit['slope']:.3f}; Q-based {fit['theory']['sharp']:.3f}")
