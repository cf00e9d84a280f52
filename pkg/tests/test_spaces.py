import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowrecon.errors import BasisNotOrthonormal, TagMismatch
from flowrecon.geometry import boundary_faces
from flowrecon.spaces import (Field, SpaceTag, assemble_gram, inner, norm, orthonormality_defect,
                              orthonormalize, project_subspace)


def _u_field(domain, fn):
    L = domain.layout
    x = np.zeros(L.n_vel)
    x[: L.n_u] = fn(L.face_x[: L.n_u], L.face_y[: L.n_u])
    return x


def test_gram_symmetric_and_factorizable(g_u, g_up):
    for g in (g_u, g_up):
        assert g.symmetry_residual() <= 1e-12
        g.check()


def test_product_gram_block_diagonal(domain, g_up, g_u):
    n = domain.layout.n_vel
    G = g_up.matrix.tocsr()
    assert G[:n, n:].nnz == 0 and G[n:, :n].nnz == 0
    assert abs(G[:n, :n] - g_u.matrix).max() == 0


def test_constant_field_norm(domain, g_u):
    L = domain.layout
    c = _u_field(domain, lambda x, y: np.ones_like(x))
    mass = float(c @ (L.mass * c))
    assert mass == pytest.approx(domain.area, rel=1e-12)
    # no interior gradient; only the no-slip layers on horizontal walls (2 hx/hy per face)
    w = boundary_faces(domain, "Wall")
    n_h = int(np.isin(w.side, ["S", "N"]).sum())
    assert inner(g_u, c, c) == pytest.approx(domain.area + 2 * n_h * L.hx / L.hy, rel=1e-12)


def test_linear_field_norm(domain, g_u):
    L = domain.layout
    u = _u_field(domain, lambda x, y: x)
    # exact integrals of x^2 and |grad u|^2 = 1 over the active cells
    ci, cj = np.nonzero(domain.active_mask)
    x0, x1 = ci * L.hx, (ci + 1) * L.hx
    int_x2 = float(np.sum(L.hy * (x1 ** 3 - x0 ** 3) / 3))
    # no-slip layers: each horizontal wall face sees its two u faces over half a column
    w = boundary_faces(domain, "Wall")
    hw = np.isin(w.side, ["S", "N"])
    xl, xr = w.cell_i[hw] * L.hx, (w.cell_i[hw] + 1) * L.hx
    layer = float(np.sum(L.hx / L.hy * (xl ** 2 + xr ** 2)))
    val = inner(g_u, u, u) - layer
    assert val == pytest.approx(int_x2 + domain.area, rel=2 * L.hx ** 2)


def test_product_norm_of_velocity_only(domain, g_u, g_up, rng):
    v = rng.standard_normal(domain.layout.n_vel)
    x = np.concatenate([v, np.zeros(domain.layout.n_p)])
    assert norm(g_up, x) == pytest.approx(norm(g_u, v), rel=1e-13)


def test_tag_mismatch(domain, g_u, g_up):
    f = Field(np.zeros(g_up.dim), SpaceTag.ProductUxP)
    with pytest.raises(TagMismatch):
        inner(g_u, f, f)
    with pytest.raises(TagMismatch):
        inner(g_u, np.zeros(3), np.zeros(3))


def test_inner_product_axioms(g_u, rng):
    n = g_u.dim
    assert inner(g_u, np.zeros(n), np.zeros(n)) == 0.0
    for _ in range(100):
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        ab = inner(g_u, a, b)
        assert ab == pytest.approx(inner(g_u, b, a), rel=1e-12, abs=1e-12)
        assert inner(g_u, a, a) > 0
        assert abs(ab) <= norm(g_u, a) * norm(g_u, b) * (1 + 1e-12)


def test_whitening_roundtrip(g_up, rng):
    X = rng.standard_normal((g_up.dim, 4))
    Y = g_up.whiten(X)
    np.testing.assert_allclose(Y.T @ Y, X.T @ (g_up.matrix @ X), rtol=1e-10)
    np.testing.assert_allclose(g_up.unwhiten(Y), X, rtol=1e-9, atol=1e-9)


@pytest.fixture(scope="module")
def basis(g_u):
    rng = np.random.default_rng(3)
    return orthonormalize(g_u, rng.standard_normal((g_u.dim, 6)))


def test_orthonormalize(g_u, basis):
    assert basis.shape[1] == 6
    assert orthonormality_defect(g_u, basis) <= 1e-10


def test_projection_identities(g_u, basis, rng):
    x = basis @ rng.standard_normal(6)
    np.testing.assert_allclose(project_subspace(basis, g_u, x), x, atol=1e-10 * np.abs(x).max())
    z = rng.standard_normal(g_u.dim)
    perp = z - project_subspace(basis, g_u, z)
    assert norm(g_u, project_subspace(basis, g_u, perp)) <= 1e-10 * norm(g_u, z)
    # Pythagoras
    pz = project_subspace(basis, g_u, z)
    assert norm(g_u, z) ** 2 == pytest.approx(norm(g_u, pz) ** 2 + norm(g_u, z - pz) ** 2, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_projection_self_adjoint(g_u, basis, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(g_u.dim), r.standard_normal(g_u.dim)
    a = inner(g_u, project_subspace(basis, g_u, x), y)
    b = inner(g_u, x, project_subspace(basis, g_u, y))
    assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_projection_requires_orthonormal_basis(g_u, rng):
    with pytest.raises(BasisNotOrthonormal):
        project_subspace(rng.standard_normal((g_u.dim, 2)), g_u, rng.standard_normal(g_u.dim))


def test_pressure_gram(domain):
    g = assemble_gram(domain, SpaceTag.PressureL2)
    one = np.ones(domain.layout.n_p)
    assert inner(g, one, one) == pytest.approx(domain.area, rel=1e-12)
