# %% [markdown]
# # Quantities of interest
#
# Pressure drops by boundary means and by virtual works, vorticity, wall shear stress
# and the divergence-free projection, all on a steady solution and a perturbed copy.

# %%
import numpy as np

from flowrecon import qoi
from flowrecon.flow import solve_steady
from flowrecon.geometry import build_domain

dom = build_domain()
u, p, _ = solve_steady(dom, u0=5.0, outlet_pressure=(10.0, 20.0))

# %% [markdown]
# Virtual works recovers the drop from the velocity alone; the sign convention returns
# the work term, so the drop is its negative.

# %%
tf = qoi.stokes_test_fields(dom)
dp_true = qoi.pressure_drop(p, dom)
dp_vw = -qoi.vw_pressure_drop([u, u], tf, 1.0, 0.03, 2e-3)[0]
print("boundary means ", dp_true)
print("virtual works  ", dp_vw)

# %%
rng = np.random.default_rng(1)
noisy = u + 0.05 * np.abs(u).max() * rng.standard_normal(u.shape) * (dom.layout.kind == 0)
print("vorticity range", np.ptp(qoi.vorticity(u, dom)))
print("relative WSS error of the perturbed field", qoi.wss_error(u, noisy, dom, 0.03))

# %%
before = qoi.divergence_norm(noisy, dom)
after = qoi.divergence_norm(qoi.helmholtz_project(noisy, dom), dom)
print(f"divergence {before:.3e} -> {after:.3e}")
