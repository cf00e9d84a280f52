import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowrecon.errors import ConfigError, RankDeficient, TagMismatch
from flowrecon.observation import (add_noise, apply_functionals, build_voxels, observe, riesz_representers,
                                   sigma_reference)
from flowrecon.spaces import SpaceTag, inner, norm


def _uniform(domain, a, b):
    L = domain.layout
    x = np.empty(L.n_vel)
    x[: L.n_u] = a
    x[L.n_u:] = b
    return x


def test_default_voxels(domain, vox):
    assert vox.m == 127
    np.testing.assert_allclose(vox.beam, [math.sqrt(2) / 2, math.sqrt(2) / 2], atol=1e-15)
    assert np.linalg.norm(vox.beam) == pytest.approx(1.0, abs=1e-12)
    L = domain.layout
    cells = np.concatenate(vox.voxels)
    assert np.all(L.cell_x[cells] < 0.5 * domain.length)
    assert len(cells) == len(np.unique(cells))                      # pairwise disjoint
    assert all(len(v) >= 4 for v in vox.voxels)
    left = int(np.sum(L.cell_x < 0.5 * domain.length))
    assert len(cells) <= left


def test_voxel_size_guard(domain):
    with pytest.raises(ConfigError):
        build_voxels(domain, voxel_size=0.05)


def test_functionals_on_uniform_fields(domain, vox):
    b = vox.beam
    l = apply_functionals(_uniform(domain, b[0], b[1]), vox)
    np.testing.assert_allclose(l, vox.volumes(), rtol=1e-12)
    l0 = apply_functionals(_uniform(domain, -b[1], b[0]), vox)
    assert np.abs(l0).max() <= 1e-14


def test_functionals_linear(domain, vox, rng):
    v, w = rng.standard_normal((2, domain.layout.n_vel))
    a = 2.7
    np.testing.assert_allclose(apply_functionals(a * v + w, vox),
                               a * apply_functionals(v, vox) + apply_functionals(w, vox), rtol=1e-12, atol=1e-12)


def test_riesz_reproducing(W_u, W_up, g_u, g_up, rng):
    for W, g in ((W_u, g_u), (W_up, g_up)):
        for _ in range(20):
            v = rng.standard_normal(g.dim)
            lhs = W.representers.T @ (g.matrix @ v)
            assert np.abs(lhs - W.lmat @ v).max() <= 1e-10 * norm(g, v)


def test_product_representers_have_no_pressure(W_up, domain):
    assert np.all(W_up.representers[domain.layout.n_vel:] == 0)


def test_gram_w_conditioning(W_u):
    assert np.isfinite(W_u.cond) and W_u.cond > 1


def test_single_voxel(domain, g_u):
    vox = build_voxels(domain, voxel_size=10.0, region=(0, domain.length, 0, domain.height))
    W = riesz_representers(vox, g_u)
    assert W.m == 1
    v = _uniform(domain, vox.beam[0], vox.beam[1])
    w1 = W.representers[:, 0]
    pw = observe(v, W)
    expect = w1 * (W.lmat @ v)[0] / inner(g_u, w1, w1)
    np.testing.assert_allclose(pw, expect, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(W.lmat @ pw, W.lmat @ v, rtol=1e-10)


def test_observe_projection(W_u, g_u, rng):
    w = W_u.representers @ rng.standard_normal(W_u.m)
    np.testing.assert_allclose(observe(w, W_u), w, atol=1e-10 * np.abs(w).max())
    v = rng.standard_normal(g_u.dim)
    perp = v - observe(v, W_u)
    assert norm(g_u, observe(perp, W_u)) <= 1e-10 * norm(g_u, v)
    np.testing.assert_allclose(W_u.lmat @ observe(v, W_u), W_u.lmat @ v, rtol=1e-10, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_observe_idempotent_self_adjoint(W_u, g_u, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, g_u.dim))
    px = observe(x, W_u)
    np.testing.assert_allclose(observe(px, W_u), px, atol=1e-10 * np.abs(px).max())
    assert inner(g_u, px, y) == pytest.approx(inner(g_u, x, observe(y, W_u)), rel=1e-10)


def test_observe_tag_checks(W_u, domain):
    with pytest.raises(TagMismatch):
        observe(np.zeros(3), W_u)


def test_dependent_functionals_rejected(domain, g_u):
    vox = build_voxels(domain)
    dup = type(vox)(vox.voxels + [vox.voxels[0]], vox.beam, vox.region, vox.voxel_size, domain)
    with pytest.raises(RankDeficient):
        riesz_representers(dup, g_u)


def test_noise():
    l = np.linspace(0, 1, 50)
    assert np.array_equal(add_noise(l, math.inf, 3, 1.0), l)
    np.testing.assert_array_equal(add_noise(l, 10, 3, 1.0), add_noise(l, 10, 3, 1.0))
    big = add_noise(np.zeros(100_000), 20.0, 11, 2.0)
    assert np.std(big) == pytest.approx(0.1, rel=0.02)
    with pytest.raises(ConfigError):
        add_noise(l, -1.0, 0, 1.0)
    assert sigma_reference(np.array([[1.0, 3.0], [2.0, -5.0]])) == 3.0
