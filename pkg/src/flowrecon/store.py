"""On-disk formats: manifold store and trained partition store.

Arrays are flat little-endian float64 files. A snapshot file holds the velocity
unknowns followed by the pressure unknowns, in the ordering of ``mac.MacLayout``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Optional

import numpy as np

from .flow import FlowParams, Manifold, PARAM_NAMES, SolverConfig, Snapshot
from .geometry import Domain, DomainConfig, build_domain
from .reduced import CellModel, PartitionGrid, ReducedBasis
from .spaces import SpaceTag

MANIFOLD_FORMAT = "flowrecon-manifold/1"
TRAINED_FORMAT = "flowrecon-trained/1"
UNITS = {"length": "cm", "time": "s", "velocity": "cm/s", "pressure": "dyn/cm^2",
         "density": "g/cm^3", "viscosity": "Poise"}
ORDERING = ("velocity: u faces (flat id j*(nx+1)+i) then v faces (flat id j*nx+i), "
            "keeping faces adjacent to an active cell; pressure: active cells (flat id j*nx+i)")


def write_array(path, a) -> None:
    np.ascontiguousarray(a, dtype="<f8").tofile(path)


def read_array(path, shape=None) -> np.ndarray:
    a = np.fromfile(path, dtype="<f8")
    return a.reshape(shape) if shape is not None else a


def _prepare_dir(root) -> Path:
    root = Path(root)
    if root.exists() and not root.is_dir():
        raise NotADirectoryError(f"output path exists and is not a directory: {root}")
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"cannot write to {root}: {exc}") from exc
    return root


def _dump(path, obj) -> str:
    text = json.dumps(obj, indent=1, sort_keys=True)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- manifold -------------------------------------------------------------------------

def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def save_manifold(manifold: Manifold, root, domain: Domain, solver: SolverConfig,
                  seed: Optional[int] = None, config: Optional[dict] = None) -> str:
    """Write the manifold; returns the sha256 of the manifest."""
    root = _prepare_dir(root)
    L = domain.layout
    tids = manifold.traj_id if manifold.traj_id is not None else np.zeros(len(manifold), int)
    trajs = []
    for k in np.unique(tids):
        idx = np.flatnonzero(tids == k)
        d = root / f"traj_{int(k):03d}"
        d.mkdir(exist_ok=True)
        entries = []
        for n, i in enumerate(idx):
            s = manifold.snapshots[i]
            fname = f"snap_{n:03d}.bin"
            write_array(d / fname, np.concatenate([s.u, s.p]))
            entries.append({"file": fname, "t": s.y.t, "cycle_index": s.cycle_index,
                            "div_norm": s.div_norm,
                            "outlet_pressure": None if s.outlet_pressure is None else list(map(float, s.outlet_pressure))})
        y0 = manifold.snapshots[idx[0]].y
        trajs.append({"id": int(k), "dir": d.name,
                      "y": {k2: getattr(y0, k2) for k2 in PARAM_NAMES if k2 != "t"},
                      "rho": y0.rho, "mu": y0.mu, "snapshots": entries})
    manifest = {
        "format": MANIFOLD_FORMAT,
        "domain": domain.config.to_dict(),
        "domain_hash": domain.config.digest(),
        "solver": solver.to_dict(),
        "provenance": manifold.provenance,
        "seed": seed,
        "config_sha256": None if config is None else config_hash(config),
        "units": UNITS,
        "layout": {"n_u": L.n_u, "n_v": L.n_v, "n_vel": L.n_vel, "n_p": L.n_p,
                   "dtype": "<f8", "ordering": ORDERING},
        "parameter_names": list(PARAM_NAMES),
        "trajectories": trajs,
    }
    return _dump(root / "manifest.json", manifest)


def load_manifold(root, trajectories=None):
    """Returns ``(Manifold, Domain, manifest)``; optionally only the listed trajectory ids."""
    root = Path(root)
    man = json.loads((root / "manifest.json").read_text())
    if man.get("format") != MANIFOLD_FORMAT:
        raise ValueError(f"{root} is not a manifold store")
    domain = build_domain(DomainConfig.from_dict(man["domain"]))
    nv = man["layout"]["n_vel"]
    snaps, tids, loaded = [], [], []
    keep = None if trajectories is None else set(int(t) for t in trajectories)
    for tr in man["trajectories"]:
        if keep is not None and tr["id"] not in keep:
            continue
        loaded.append(str((root / tr["dir"]).resolve()))
        for e in tr["snapshots"]:
            a = read_array(root / tr["dir"] / e["file"])
            y = FlowParams(t=e["t"], rho=tr["rho"], mu=tr["mu"], **tr["y"])
            op = e.get("outlet_pressure")
            snaps.append(Snapshot(a[:nv], a[nv:], y, e["cycle_index"], e["div_norm"],
                                  None if op is None else np.array(op)))
            tids.append(tr["id"])
    man["loaded_dirs"] = loaded
    return Manifold(snaps, man["provenance"], np.array(tids, int)), domain, man


# -- trained partitions ---------------------------------------------------------

def save_grid(grid: PartitionGrid, root) -> dict:
    root = _prepare_dir(root)
    cells = []
    for (k, kp), c in sorted(grid.cells.items()):
        d = root / f"cell_{k}_{kp}"
        d.mkdir(exist_ok=True)
        write_array(d / "modes.bin", c.basis.modes.T)
        write_array(d / "singular_values.bin", c.basis.singular_values)
        with open(d / "curves.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "eps", "delta", "beta"])
            for n in range(len(c.eps_curve)):
                w.writerow([n, repr(float(c.eps_curve[n])), repr(float(c.delta_curve[n])), repr(float(c.beta_curve[n]))])
        entry = {"k": k, "k_prime": kp, "dir": d.name, "n_modes": c.basis.n, "dim": c.basis.modes.shape[0],
                 "n_star": c.n_star, "count": c.count, "score": c.score,
                 "rank_deficient": c.basis.rank_deficient}
        if c.kappa is not None:
            entry["kappa"] = np.asarray(c.kappa).tolist()
        if c.coef_bounds is not None:
            write_array(d / "coef_bounds.bin", c.coef_bounds)
        cells.append(entry)
    meta = {"K": grid.K, "K_prime": grid.K_prime, "space_tag": grid.space_tag.value,
            "score": grid.score, "cells": cells,
            "scores": [{"K": a, "K_prime": b, "score": s} for (a, b), s in sorted(grid.scores.items())]}
    _dump(root / "grid.json", meta)
    with open(root / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "K_prime", "score"])
        for (a, b), s in sorted(grid.scores.items()):
            w.writerow([a, b, repr(float(s))])
    return meta


def _read_curves(path):
    rows = list(csv.DictReader(open(path)))
    return tuple(np.array([float(r[k]) for r in rows]) for k in ("eps", "delta", "beta"))


def load_grid(root, W) -> PartitionGrid:
    root = Path(root)
    meta = json.loads((root / "grid.json").read_text())
    tag = SpaceTag(meta["space_tag"])
    cells = {}
    for e in meta["cells"]:
        d = root / e["dir"]
        modes = read_array(d / "modes.bin", (e["n_modes"], e["dim"])).T.copy()
        sv = read_array(d / "singular_values.bin")
        eps, delta, beta = _read_curves(d / "curves.csv")
        cb = read_array(d / "coef_bounds.bin") if (d / "coef_bounds.bin").exists() else None
        basis = ReducedBasis(modes, sv, tag, e["rank_deficient"])
        cells[(e["k"], e["k_prime"])] = CellModel(
            basis, eps, delta, beta, e["n_star"], e["count"], W.lmat @ modes,
            np.array(e["kappa"]) if "kappa" in e else None, cb)
    scores = {(s["K"], s["K_prime"]): s["score"] for s in meta.get("scores", [])}
    return PartitionGrid(meta["K"], meta["K_prime"], cells, space_tag=tag, scores=scores)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def write_json(path, obj) -> str:
    return _dump(path, obj)
