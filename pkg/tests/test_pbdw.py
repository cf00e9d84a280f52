import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import lsq_linear

from flowrecon.errors import IllConditioned, RankDeficient, ZeroBeta
from flowrecon.observation import build_voxels, observe, riesz_representers
from flowrecon.pbdw import (PBDWSolver, PiecewisePBDW, error_bound, infsup_beta, ls_constrained,
                            ls_unconstrained, measurement_matrix, pbdw_reconstruct, pbdw_v_star,
                            piecewise_reconstruct, spg_box)
from flowrecon.reduced import ReducedBasis, TrainingSet, build_partition, pod_basis
from flowrecon.spaces import SpaceTag, norm, orthonormalize


@pytest.fixture(scope="module")
def W10(domain, g_u):
    vox = build_voxels(domain, voxel_size=0.6)
    assert vox.m <= 10
    return riesz_representers(vox, g_u)


def _basis_near_W(W, g, n, seed, mix=0.3):
    r = np.random.default_rng(seed)
    X = W.representers[:, :n] / np.abs(W.representers[:, :n]).max() + mix * r.standard_normal((g.dim, n)) * 1e-2
    return orthonormalize(g, X)


def _grid_argmin(Q, b, lo, hi, spacing=1e-3, pts=21):
    """Exhaustive search of c^T Q c - 2 b^T c on nested tensor grids down to ``spacing``."""
    n = len(b)
    center = np.zeros(n)
    half = np.full(n, float(hi))
    while True:
        axes = [np.linspace(center[k] - half[k], center[k] + half[k], pts) for k in range(n)]
        C = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
        f = np.einsum("ij,jk,ik->i", C, Q, C) - 2 * C @ b
        center = C[np.argmin(f)]
        step = 2 * half / (pts - 1)
        if step.max() <= spacing:
            return center
        half = 2 * step


@pytest.mark.parametrize("n", [1, 2, 3])
def test_v_star_matches_brute_force(W10, g_u, n):
    V = _basis_near_W(W10, g_u, n, seed=n)
    u = np.random.default_rng(10 + n).standard_normal(g_u.dim)
    omega = observe(u, W10)
    PV = np.column_stack([observe(V[:, j], W10) for j in range(n)])
    # |omega - P_W V c|^2 expanded with Gram products computed in the ambient space
    G = g_u.matrix
    Q = PV.T @ (G @ PV)
    b = PV.T @ (G @ omega)
    c_ne = pbdw_v_star(omega, V, W10)
    scale = max(1.0, np.abs(c_ne).max())
    c_bf = _grid_argmin(Q / scale ** 2, b / scale, -2, 2) * scale
    assert np.abs(c_bf - c_ne).max() <= 1e-3 * scale


def test_v_star_closed_form_n1(W_u, g_u, rng):
    v1 = orthonormalize(g_u, rng.standard_normal((g_u.dim, 1)))
    omega = observe(rng.standard_normal(g_u.dim), W_u)
    pv = observe(v1[:, 0], W_u)
    expect = (pv @ (g_u.matrix @ omega)) / (pv @ (g_u.matrix @ pv))
    assert pbdw_v_star(omega, v1, W_u)[0] == pytest.approx(expect, rel=1e-9)


def test_exact_recovery_in_basis(W_u, g_u, rng):
    V = _basis_near_W(W_u, g_u, 8, 0)
    c = rng.standard_normal(8)
    u = V @ c
    res = pbdw_reconstruct(observe(u, W_u), V, W_u)
    np.testing.assert_allclose(res.v_star_coeffs, c, rtol=1e-9, atol=1e-10)
    assert norm(g_u, u - res.u_star.coeffs) <= 1e-8 * norm(g_u, u)


def test_v_equals_w_returns_omega(W10, g_u, rng):
    V = orthonormalize(g_u, W10.representers)
    omega = observe(rng.standard_normal(g_u.dim), W10)
    res = pbdw_reconstruct(omega, V, W10)
    np.testing.assert_allclose(res.u_star.coeffs, omega, atol=1e-9 * np.abs(omega).max())
    assert res.beta_used == pytest.approx(1.0, abs=1e-10)


def test_infsup_limits(W10, g_u, rng):
    V = orthonormalize(g_u, W10.representers[:, :3])
    assert infsup_beta(V, W10) == pytest.approx(1.0, abs=1e-10)
    X = rng.standard_normal((g_u.dim, 2))
    X -= np.column_stack([observe(x, W10) for x in X.T])
    Vp = orthonormalize(g_u, X)
    assert infsup_beta(Vp, W10) <= 1e-8
    with pytest.raises(IllConditioned):
        PBDWSolver(Vp, W10)
    big = orthonormalize(g_u, rng.standard_normal((g_u.dim, W10.m + 1)))
    assert infsup_beta(big, W10) == 0.0


def test_consistency_and_bound(W_u, g_u, rng):
    V = _basis_near_W(W_u, g_u, 10, 4)
    for _ in range(5):
        u = V @ rng.standard_normal(10) + 0.1 * rng.standard_normal(g_u.dim)
        omega = observe(u, W_u)
        res = pbdw_reconstruct(omega, V, W_u)
        np.testing.assert_allclose(W_u.lmat @ res.u_star.coeffs, W_u.lmat @ u, rtol=1e-8, atol=1e-10)
        dist = norm(g_u, u - V @ (V.T @ (g_u.matrix @ u)))
        assert norm(g_u, u - res.u_star.coeffs) <= dist / res.beta_used + 1e-8 * norm(g_u, u)


@pytest.fixture(scope="module")
def grids(g_u, W_u):
    r = np.random.default_rng(8)
    phi = r.standard_normal((g_u.dim, 6))
    ph = r.uniform(0, 1, 60)
    HR = r.uniform(48, 120, 60)
    A = np.vstack([np.cos(np.pi * k * ph) * (HR / 84) ** k for k in range(6)])
    params = np.column_stack([ph * 60 / HR, HR, np.zeros((60, 4))])
    ts = TrainingSet(phi @ A, params, g_u, W_u)
    return ts, build_partition(ts, W_u, 1, 1, g_u), build_partition(ts, W_u, 2, 2, g_u)


def test_piecewise_dispatch(grids, W_u, rng):
    ts, g11, g22 = grids
    u = ts.X[:, 0]
    res = piecewise_reconstruct(W_u.lmat @ u, (0.01, 50.0), g22, W_u)
    assert res.cell_used == (0, 0)
    T = 60 / 84.0
    res = PiecewisePBDW(g22, W_u)(W_u.lmat @ u, (0.5 * T, 84.0))
    assert res.cell_used == (1, 1)


def test_piecewise_1x1_equals_global(grids, W_u):
    ts, g11, _ = grids
    cell = g11.cells[(0, 0)]
    u = ts.X[:, 3]
    a = piecewise_reconstruct(W_u.lmat @ u, (0.1, 70.0), g11, W_u)
    b = pbdw_reconstruct(W_u.lmat @ u, cell.basis.truncate(cell.n_star), W_u)
    np.testing.assert_allclose(a.u_star.coeffs, b.u_star.coeffs, rtol=1e-12, atol=1e-12)


# -- noisy least squares -------------------------------------------------------------

@pytest.fixture(scope="module")
def ls_setup(W_u, g_u):
    V = _basis_near_W(W_u, g_u, 6, 7)
    return V, measurement_matrix(V, W_u)


def test_ls_exact_and_zero(ls_setup, W_u, rng):
    V, A = ls_setup
    c = rng.standard_normal(6)
    np.testing.assert_allclose(ls_unconstrained(A @ c, V, W_u), c, rtol=1e-10, atol=1e-10)
    assert np.all(ls_unconstrained(np.zeros(W_u.m), V, W_u) == 0)
    np.testing.assert_allclose(measurement_matrix(V, W_u.voxels), A)


def test_ls_unbiased_monte_carlo(ls_setup, W_u):
    V, A = ls_setup
    c = np.linspace(1, 2, 6)
    z0 = A @ c
    sig = 0.05 * np.abs(z0).max()
    r = np.random.default_rng(1)
    C = np.array([ls_unconstrained(z0 + sig * r.standard_normal(len(z0)), V, W_u) for _ in range(100)])
    se = C.std(0, ddof=1) / math.sqrt(100)
    assert np.all(np.abs(C.mean(0) - c) <= 3 * se + 1e-12)


def test_ls_rank_deficient(W10, g_u, rng):
    V = orthonormalize(g_u, rng.standard_normal((g_u.dim, W10.m + 1)))
    with pytest.raises(RankDeficient):
        ls_unconstrained(np.zeros(W10.m), V, W10)


def test_cls_inactive_equals_ls(ls_setup, W_u, rng):
    V, A = ls_setup
    c = rng.standard_normal(6)
    z = A @ c
    ub = np.abs(c) * 1.5
    assert np.array_equal(ls_constrained(z, V, W_u, ub), ls_unconstrained(z, V, W_u))
    zn = z + 0.01 * rng.standard_normal(len(z))
    np.testing.assert_array_equal(ls_constrained(zn, V, W_u, np.full(6, np.inf)), ls_unconstrained(zn, V, W_u))


def test_cls_clamps_and_matches_lsq_linear(ls_setup, W_u, rng):
    V, A = ls_setup
    c = rng.standard_normal(6)
    ub = np.abs(c) * 1.1
    z = A @ c + 5 * np.abs(A @ c).max() * rng.standard_normal(W_u.m)
    got = ls_constrained(z, V, W_u, ub)
    ref = lsq_linear(A, z, bounds=(-ub, ub), method="bvls", tol=1e-14).x
    active = np.isclose(np.abs(ref), ub, rtol=0, atol=1e-9)
    assert active.any()
    np.testing.assert_allclose(np.abs(got[active]), ub[active], rtol=1e-8)
    f = lambda x: np.linalg.norm(A @ x - z)
    assert f(got) <= f(ref) * (1 + 1e-9)
    np.testing.assert_allclose(got, ref, atol=1e-6 * np.abs(ub).max())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), noise=st.floats(0.0, 10.0), shrink=st.floats(0.01, 2.0))
def test_cls_feasible(ls_setup, W_u, seed, noise, shrink):
    V, A = ls_setup
    r = np.random.default_rng(seed)
    c = r.standard_normal(6)
    ub = np.abs(c) * shrink
    z = A @ c + noise * r.standard_normal(W_u.m) * np.abs(A @ c).max()
    x = ls_constrained(z, V, W_u, ub)
    assert np.all(np.abs(x) <= ub + 1e-10)


def test_spg_simple_box():
    A = np.eye(3)
    x = spg_box(A, np.array([3.0, -3.0, 0.5]), -np.ones(3), np.ones(3), np.zeros(3))
    np.testing.assert_allclose(x, [1.0, -1.0, 0.5], atol=1e-10)


def test_error_bound():
    assert error_bound(1.0, 0.3) == 0.3
    assert error_bound(0.5, 0.0) == 0.0
    with pytest.raises(ZeroBeta):
        error_bound(0.0, 1.0)
