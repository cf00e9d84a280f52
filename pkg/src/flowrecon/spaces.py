"""Discrete inner-product spaces: H1 velocity, L2 pressure and their product."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BasisNotOrthonormal, NumericalError, TagMismatch


class SpaceTag(str, Enum):
    VelocityH1 = "VelocityH1"
    PressureL2 = "PressureL2"
    ProductUxP = "ProductUxP"


@dataclass(frozen=True)
class Field:
    coeffs: np.ndarray
    space_tag: SpaceTag

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, float))
        object.__setattr__(self, "space_tag", SpaceTag(self.space_tag))


class LDLFactor:
    """Symmetric factorization ``P G P^T = L D L^T`` (SuperLU in symmetric mode).

    ``whiten`` maps coefficients to Euclidean coordinates, ``|whiten(x)| = |x|_G``.
    """

    def __init__(self, G: sp.spmatrix):
        G = sp.csc_matrix(G)
        lu = spla.splu(G, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
        if not np.array_equal(lu.perm_r, lu.perm_c):
            raise NumericalError("symmetric pivoting was not preserved")
        d = lu.U.diagonal()
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise NumericalError("Gram matrix is not positive definite")
        self.lu = lu
        self.perm = lu.perm_c
        self.L = sp.csr_matrix(lu.L)
        self.Lt = sp.csr_matrix(lu.L.T)
        self.sqrt_d = np.sqrt(d)
        self.n = G.shape[0]

    def _perm(self, X):
        Y = np.empty_like(X)
        Y[self.perm] = X
        return Y

    def whiten(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, float)
        return self.sqrt_d.reshape((-1,) + (1,) * (X.ndim - 1)) * (self.Lt @ self._perm(X))

    def unwhiten(self, Y: np.ndarray) -> np.ndarray:
        # x = G^{-1} R^T y with R = D^{1/2} L^T P
        Y = np.asarray(Y, float)
        Z = self.L @ (self.sqrt_d.reshape((-1,) + (1,) * (Y.ndim - 1)) * Y)
        return self.lu.solve(np.ascontiguousarray(Z[self.perm]))

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self.lu.solve(np.asarray(b, float))


class GramOperator:
    def __init__(self, matrix: sp.spmatrix, space_tag: SpaceTag, n_u: int = 0):
        self.matrix = sp.csr_matrix(matrix)
        self.space_tag = SpaceTag(space_tag)
        self.n_u = n_u  # size of the velocity block in the product space

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def factor(self) -> LDLFactor:
        return LDLFactor(self.matrix)

    def symmetry_residual(self) -> float:
        G = self.matrix
        return float(abs(G - G.T).max() / abs(G).max())

    def check(self) -> None:
        if self.symmetry_residual() > 1e-12:
            raise NumericalError("Gram matrix is not symmetric")
        self.factor

    def apply(self, x):
        return self.matrix @ x

    def solve(self, b):
        return self.factor.solve(b)

    def whiten(self, X):
        return self.factor.whiten(X)

    def unwhiten(self, Y):
        return self.factor.unwhiten(Y)

    def velocity_part(self, x):
        return x[: self.n_u] if self.space_tag == SpaceTag.ProductUxP else x

    def pressure_part(self, x):
        return x[self.n_u:] if self.space_tag == SpaceTag.ProductUxP else None


def velocity_gram(domain) -> sp.csr_matrix:
    L = domain.layout
    return (sp.diags(L.mass) + L.stiffness).tocsr()


def assemble_gram(domain, tag) -> GramOperator:
    """Gram matrix of ``int u.v + grad u : grad v`` (velocity), ``int p q`` (pressure) or both."""
    tag = SpaceTag(tag)
    L = domain.layout
    if tag == SpaceTag.VelocityH1:
        return GramOperator(velocity_gram(domain), tag, L.n_vel)
    Gp = sp.diags(np.full(L.n_p, domain.cell_area))
    if tag == SpaceTag.PressureL2:
        return GramOperator(Gp, tag, 0)
    return GramOperator(sp.block_diag([velocity_gram(domain), Gp]), tag, L.n_vel)


def _coeffs(x, g: GramOperator):
    if isinstance(x, Field):
        if x.space_tag != g.space_tag:
            raise TagMismatch(f"field tag {x.space_tag.value} does not match {g.space_tag.value}")
        return x.coeffs
    x = np.asarray(x, float)
    if x.shape[0] != g.dim:
        raise TagMismatch(f"vector length {x.shape[0]} does not match Gram size {g.dim}")
    return x


def inner(g: GramOperator, a, b) -> float:
    a, b = _coeffs(a, g), _coeffs(b, g)
    return float(a @ (g.matrix @ b))


def norm(g: GramOperator, a) -> float:
    return float(np.sqrt(max(inner(g, a, a), 0.0)))


def norms(g: GramOperator, X: np.ndarray) -> np.ndarray:
    """Column-wise norms of a coefficient matrix."""
    return np.linalg.norm(g.whiten(X), axis=0)


def orthonormality_defect(g: GramOperator, B: np.ndarray) -> float:
    B = np.atleast_2d(np.asarray(B, float).T).T
    M = B.T @ (g.matrix @ B)
    return float(np.abs(M - np.eye(B.shape[1])).max()) if B.shape[1] else 0.0


def orthonormalize(g: GramOperator, X: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """G-orthonormal basis of span(X) via QR in whitened coordinates (rank revealing)."""
    Y = g.whiten(np.asarray(X, float))
    Q, R = np.linalg.qr(Y)
    d = np.abs(np.diag(R))
    keep = d > rtol * (d.max() if d.size else 1.0)
    return g.unwhiten(Q[:, keep])


def _basis_matrix(basis) -> np.ndarray:
    B = getattr(basis, "modes", basis)
    B = np.asarray(B, float)
    return B.reshape(-1, 1) if B.ndim == 1 else B


def project_subspace(basis, g: GramOperator, x, tol: float = 1e-10):
    """G-orthogonal projection onto span(basis); the basis must be G-orthonormal."""
    B = _basis_matrix(basis)
    if orthonormality_defect(g, B) > tol:
        raise BasisNotOrthonormal("basis is not G-orthonormal to 1e-10")
    xc = _coeffs(x, g)
    px = B @ (B.T @ (g.matrix @ xc))
    return Field(px, g.space_tag) if isinstance(x, Field) else px
