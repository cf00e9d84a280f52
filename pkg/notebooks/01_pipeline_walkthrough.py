# %% [markdown]
# # Pipeline walkthrough
#
# Generate a small manifold, train piecewise reduced models and reconstruct one
# held-out state from its voxel measurements. Everything runs on the 32x16 smoke grid
# in well under a minute.

# %%
import tempfile
from pathlib import Path

import numpy as np

from flowrecon.pipeline import (Context, RunConfig, generate, load_test_set, load_trained,
                                reconstruct, save_trained, train)
from flowrecon.store import load_manifold

ROOT = Path(__file__).resolve().parents[1] if "__file__" in globals() else Path.cwd().parent
cfg = RunConfig.from_json(ROOT / "configs" / "smoke.json")
work = Path(tempfile.mkdtemp(prefix="flowrecon-"))

# %% [markdown]
# ## Forward solves
# Each trajectory is one parameter draw, solved for a heart beat and sampled at
# `n_save` phases.

# %%
info = generate(cfg, work / "manifold")
man, domain, _ = load_manifold(work / "manifold")
print(info["snapshots"], "snapshots from", info["trajectories"], "trajectories")
print("grid", domain.layout.n_vel, "velocity dofs,", domain.layout.n_p, "pressure dofs")

# %% [markdown]
# ## Training
# The partition search scores every (K, K') pair on the validation trajectories.

# %%
ctx = Context(domain, cfg.voxels)
tr = train(man, ctx, cfg)
save_trained(tr, work / "trained", work / "manifold", cfg)
for name, grid in tr.grids.items():
    print(f"{name:8s} K={grid.K} K'={grid.K_prime} score={grid.score:.3g}")
print("m =", ctx.W_u.m, "voxels")

# %% [markdown]
# ## One reconstruction
# Measurements of a test snapshot go in; the estimate, the stability constant and the
# a priori bound come out.

# %%
tr, cfg = load_trained(work / "trained")
test = load_test_set(tr)
s = test.snapshots[len(test) // 2]
u, diag = reconstruct(tr, ctx.W_u.lmat @ s.u, s.y.t, s.y.HR, "pbdw")
gw = ctx.g_u.whiten
rel = np.linalg.norm(gw(s.u - u)) / np.linalg.norm(gw(s.u))
print(f"cell {diag['cell']}  n={diag['n']}  beta={diag['beta']:.3f}  rel. error {rel:.3%}")

# %%
u_j, dj = reconstruct(tr, ctx.W_u.lmat @ s.u, s.y.t, s.y.HR, "joint")
print("pressure drop estimate", np.round(dj["pressure_drop"], 1), "+/-", np.round(dj.get("dp_bound", []), 1))
