"""Voxel measurements along an ultrasound beam, their Riesz representers and noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigError, LinSolveError, RankDeficient, TagMismatch
from .spaces import Field, GramOperator, SpaceTag

MIN_CELLS = 4


@dataclass(frozen=True, eq=False)
class VoxelSet:
    voxels: list          # arrays of pressure-cell indices (active cells)
    beam: np.ndarray
    region: tuple         # (x0, x1, y0, y1) in cm
    voxel_size: float
    domain: object

    @property
    def m(self) -> int:
        return len(self.voxels)

    def functional_matrix(self, tag=SpaceTag.VelocityH1) -> sp.csr_matrix:
        """Sparse ``m x dim`` matrix with rows ``l_i`` (midpoint rule on cell centers)."""
        L = self.domain.layout
        rows = np.concatenate([np.full(len(v), k) for k, v in enumerate(self.voxels)])
        cols = np.concatenate(self.voxels)
        S = sp.csr_matrix((np.full(len(rows), self.domain.cell_area), (rows, cols)), shape=(self.m, L.n_p))
        Lm = S @ (self.beam[0] * L.to_cell_x + self.beam[1] * L.to_cell_y)
        if SpaceTag(tag) == SpaceTag.ProductUxP:
            Lm = sp.hstack([Lm, sp.csr_matrix((self.m, L.n_p))])
        return sp.csr_matrix(Lm)

    def volumes(self) -> np.ndarray:
        return np.array([len(v) for v in self.voxels]) * self.domain.cell_area


def build_voxels(domain, voxel_size: float = 0.15, region: Optional[tuple] = None,
                 beam_angle: float = math.pi / 4, min_cells: int = MIN_CELLS) -> VoxelSet:
    """Tile ``region`` with square voxels and keep those covering enough active cells.

    A cell belongs to the voxel containing its center. The default region is the
    upstream half of the channel.
    """
    if region is None:
        region = (0.0, 0.5 * domain.length, 0.0, domain.height)
    x0, x1, y0, y1 = map(float, region)
    if voxel_size < 2 * min(domain.hx, domain.hy):
        raise ConfigError(f"voxel size {voxel_size} below twice the cell size")
    L = domain.layout
    cx, cy = L.cell_x, L.cell_y
    inside = (cx >= x0) & (cx < x1) & (cy >= y0) & (cy < y1)
    if not inside.any():
        raise ConfigError("observation region contains no active cell")
    ix = np.floor((cx - x0) / voxel_size).astype(int)
    iy = np.floor((cy - y0) / voxel_size).astype(int)
    nyv = int(math.ceil((y1 - y0) / voxel_size)) + 1
    key = np.where(inside, ix * nyv + iy, -1)
    voxels = []
    for k in np.unique(key[key >= 0]):
        cells = np.flatnonzero(key == k)
        if len(cells) >= min_cells:
            voxels.append(cells)
    if not voxels:
        raise ConfigError("no voxel holds enough active cells")
    beam = np.array([math.cos(beam_angle), math.sin(beam_angle)])
    return VoxelSet(voxels, beam, (x0, x1, y0, y1), voxel_size, domain)


def apply_functionals(v, vox: VoxelSet) -> np.ndarray:
    """Voxel integrals of ``v . b`` for a velocity (or product-space) field or matrix."""
    if isinstance(v, Field):
        if v.space_tag == SpaceTag.PressureL2:
            raise TagMismatch("measurements act on velocity fields")
        v = v.coeffs
    v = np.asarray(v, float)
    n_vel = vox.domain.layout.n_vel
    if v.shape[0] not in (n_vel, n_vel + vox.domain.layout.n_p):
        raise TagMismatch(f"vector length {v.shape[0]} is not a velocity field")
    return vox.functional_matrix() @ v[:n_vel]


@dataclass(frozen=True, eq=False)
class ObservationSpace:
    representers: np.ndarray   # dim x m
    gram_w: np.ndarray         # m x m
    voxels: VoxelSet
    space_tag: SpaceTag
    lmat: sp.csr_matrix        # m x dim
    chol: np.ndarray           # upper R with gram_w = R^T R

    @property
    def m(self) -> int:
        return self.gram_w.shape[0]

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.gram_w))

    def measure(self, x: np.ndarray) -> np.ndarray:
        return self.lmat @ x

    def whitened(self, lvals: np.ndarray) -> np.ndarray:
        """Coordinates of ``P_W u`` in the orthonormal basis ``omega R^{-1}`` of W."""
        return sla.solve_triangular(self.chol, lvals, trans="T")

    def from_measurements(self, lvals: np.ndarray) -> np.ndarray:
        """The element of W with the given measurement values."""
        return self.representers @ sla.cho_solve((self.chol, False), lvals)

    def field(self, lvals: np.ndarray) -> Field:
        return Field(self.from_measurements(lvals), self.space_tag)


def riesz_representers(vox: VoxelSet, g: GramOperator) -> ObservationSpace:
    """Solve ``G omega_i = L_i`` for every voxel functional."""
    if g.space_tag == SpaceTag.PressureL2:
        raise TagMismatch("representers live in the velocity or product space")
    Lm = vox.functional_matrix(g.space_tag)
    try:
        Omega = g.solve(Lm.T.toarray())
    except Exception as exc:
        raise LinSolveError(f"representer solve failed: {exc}") from exc
    Omega = np.asarray(Omega).reshape(g.dim, -1)
    if g.space_tag == SpaceTag.ProductUxP:
        Omega[g.n_u:] = 0.0
    Gw = Lm @ Omega
    Gw = 0.5 * (Gw + Gw.T)
    ev = np.linalg.eigvalsh(Gw)
    if ev[0] < 1e-12 * ev[-1]:
        raise RankDeficient(f"voxel functionals are dependent (eigenvalue ratio {ev[0] / ev[-1]:.2e})")
    R = sla.cholesky(Gw, lower=False)
    return ObservationSpace(Omega, Gw, vox, g.space_tag, Lm, R)


def observe(v, W: ObservationSpace):
    """Orthogonal projection onto W, ``P_W v = Omega Gw^{-1} l(v)``."""
    x = v.coeffs if isinstance(v, Field) else np.asarray(v, float)
    if isinstance(v, Field) and v.space_tag != W.space_tag:
        raise TagMismatch(f"field tag {v.space_tag.value} does not match {W.space_tag.value}")
    if x.shape[0] != W.representers.shape[0]:
        raise TagMismatch("field size does not match the observation space")
    out = W.from_measurements(W.lmat @ x)
    return Field(out, W.space_tag) if isinstance(v, Field) else out


def add_noise(l_values, alpha: float, seed: int, sigma_ref: float) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation ``sigma_ref / alpha``."""
    l_values = np.asarray(l_values, float)
    if math.isinf(alpha):
        return l_values.copy()
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    rng = np.random.default_rng(seed)
    return l_values + rng.normal(0.0, sigma_ref / alpha, size=l_values.shape)


def sigma_reference(lvals: np.ndarray) -> float:
    """``max_t max_i l_i(u(t))`` over a set of measurement vectors (columns)."""
    return float(np.max(lvals))
