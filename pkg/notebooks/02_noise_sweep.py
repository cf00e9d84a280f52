# %% [markdown]
# # Noisy measurements
#
# Least squares on a short reduced basis, with and without the coefficient box, as the
# noise level sigma_ref / alpha grows. Small n is robust; large n fits the noise.

# %%
import numpy as np

from flowrecon.flow import FlowParams, solve_unsteady
from flowrecon.geometry import build_domain
from flowrecon.observation import add_noise, build_voxels, riesz_representers, sigma_reference
from flowrecon.pbdw import ls_constrained, ls_unconstrained
from flowrecon.reduced import coefficient_bounds, pod_basis
from flowrecon.spaces import SpaceTag, assemble_gram

dom = build_domain({"nx": 32, "ny": 16})
g = assemble_gram(dom, SpaceTag.VelocityH1)
W = riesz_representers(build_voxels(dom, voxel_size=0.25), g)

# %%
rng = np.random.default_rng(0)
snaps = []
for HR in rng.uniform(60, 100, 6):
    y = FlowParams(HR=float(HR), s=0.1, u0=18.0, eta=float(rng.uniform(0.6, 1.4)))
    snaps += solve_unsteady(y, dom, dt=4e-3, n_cycles=1, n_save=10)
X = np.column_stack([s.u for s in snaps])
train, test = X[:, :50], X[:, 50:]
basis = pod_basis(train, g, 12)
lV = W.lmat @ basis.modes
bounds = coefficient_bounds(basis, train, g, lV, W.lmat @ train)
sigma = sigma_reference(W.lmat @ train)
print("m =", W.m, " basis size", basis.n)

# %%
gw = g.whiten
Vw = gw(basis.modes)
for alpha in (10.0, 20.0, np.inf):
    row = []
    for n in (1, 2, 4, 8):
        errs = {"ls": [], "cls": []}
        for j in range(test.shape[1]):
            uw = gw(test[:, j])
            for r in range(20):
                z = add_noise(W.lmat @ test[:, j], alpha, 100 * j + r, sigma)
                for name, c in (("ls", ls_unconstrained(z, None, None, lV[:, :n])),
                                ("cls", ls_constrained(z, None, None, bounds[:n], lV[:, :n]))):
                    errs[name].append(np.linalg.norm(uw - Vw[:, :n] @ c) / np.linalg.norm(uw))
        row.append(f"n={n}: {np.mean(errs['ls']):.3f}/{np.mean(errs['cls']):.3f}")
    print(f"alpha={alpha:>4}  ", "  ".join(row))

# %% [markdown]
# The box comes from training coefficients only. Without noise and at larger n, held-out
# states can sit outside it, so the clamp costs accuracy there; with noise it is what
# keeps the n=8 error bounded.
