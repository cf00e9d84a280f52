import numpy as np
import pytest

from flowrecon.flow import SolverConfig, sample_manifold
from flowrecon.reduced import TrainingSet, build_partition
from flowrecon.store import load_grid, load_manifold, read_array, save_grid, save_manifold, write_array


def test_array_roundtrip(tmp_path):
    a = np.random.default_rng(0).standard_normal(17)
    write_array(tmp_path / "a.bin", a)
    assert (tmp_path / "a.bin").stat().st_size == 17 * 8
    assert np.array_equal(read_array(tmp_path / "a.bin"), a)


def test_manifold_roundtrip(tmp_path, small):
    cfg = SolverConfig(dt=4e-3, n_cycles=1, n_save=5)
    m = sample_manifold(None, 2, 3, small, cfg)
    save_manifold(m, tmp_path / "m", small, cfg, 3)
    m2, d2, manifest = load_manifold(tmp_path / "m")
    assert d2.config == small.config
    assert len(m2) == len(m)
    for a, b in zip(m.snapshots, m2.snapshots):
        assert np.array_equal(a.u, b.u) and np.array_equal(a.p, b.p) and a.y == b.y
    part, _, man = load_manifold(tmp_path / "m", trajectories=[1])
    assert set(part.traj_id) == {1} and len(man["loaded_dirs"]) == 1


def test_grid_roundtrip(tmp_path, g_u, W_u):
    r = np.random.default_rng(1)
    X = r.standard_normal((g_u.dim, 6)) @ r.standard_normal((6, 30))
    HR = r.uniform(48, 120, 30)
    P = np.column_stack([r.uniform(0, 1, 30) * 60 / HR, HR, np.zeros((30, 4))])
    grid = build_partition(TrainingSet(X, P, g_u, W_u), W_u, 1, 1, g_u)
    grid.cells[(0, 0)].coef_bounds = np.arange(grid.cells[(0, 0)].basis.n, dtype=float)
    save_grid(grid, tmp_path / "g")
    g2 = load_grid(tmp_path / "g", W_u)
    a, b = grid.cells[(0, 0)], g2.cells[(0, 0)]
    assert np.array_equal(a.basis.modes, b.basis.modes)
    for k in ("eps_curve", "delta_curve", "beta_curve", "coef_bounds"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
    assert a.n_star == b.n_star and g2.K == 1


def test_load_rejects_foreign_dir(tmp_path):
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_manifold(tmp_path)
