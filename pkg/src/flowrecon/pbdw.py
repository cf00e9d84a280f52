"""Online reconstruction: PBDW, piecewise dispatch, noisy least squares and bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import IllConditioned, RankDeficient, SolverFail, ZeroBeta
from .observation import ObservationSpace
from .reduced import PartitionGrid, ReducedBasis, beta_curve
from .spaces import Field

BETA_MIN = 1e-12


@dataclass
class ReconstructionResult:
    u_star: Field
    v_star_coeffs: np.ndarray
    cell_used: Optional[tuple] = None
    n_used: int = 0
    beta_used: float = math.nan
    residual: float = math.nan
    bound: float = math.nan
    extras: dict = field(default_factory=dict)


def _modes(Vn):
    return Vn.modes if isinstance(Vn, ReducedBasis) else np.asarray(Vn, float)


def infsup_beta(Vn, W: ObservationSpace, g=None) -> float:
    """Smallest singular value of ``R^{-T} l(V)``, i.e. ``inf_v |P_W v| / |v|`` over V_n.

    The basis must be G-orthonormal (``g`` is accepted for symmetry with the other
    operations; the Gram matrix of W already carries the inner product).
    """
    V = _modes(Vn)
    n = V.shape[1]
    if n > W.m:
        return 0.0
    if n == 0:
        return 1.0
    return float(beta_curve(W.lmat @ V, W)[n])


class PBDWSolver:
    """Offline factorization for one (V_n, W_m) pair.

    ``C = R^{-T} l(V)`` is the matrix of ``P_W`` restricted to V_n in orthonormal
    coordinates of both spaces; its thin QR is reused for every query.
    """

    def __init__(self, Vn, W: ObservationSpace, lV: Optional[np.ndarray] = None, eps_n: float = math.nan):
        self.V = _modes(Vn)
        self.W = W
        self.lV = W.lmat @ self.V if lV is None else lV
        self.C = W.whitened(self.lV)
        n = self.V.shape[1]
        sv = np.linalg.svd(self.C, compute_uv=False) if n else np.array([1.0])
        self.beta = 0.0 if n > W.m else float(np.clip(sv[-1], 0.0, 1.0))
        if self.beta <= BETA_MIN:
            raise IllConditioned(f"beta(V_n, W_m) = {self.beta:.3e} below {BETA_MIN}")
        self.Q, self.R = np.linalg.qr(self.C)
        self.eps_n = eps_n

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def v_star(self, lvals: np.ndarray) -> np.ndarray:
        w = self.W.whitened(lvals)
        return sla.solve_triangular(self.R, self.Q.T @ w)

    def reconstruct(self, lvals: np.ndarray) -> ReconstructionResult:
        c = self.v_star(lvals)
        corr = lvals - self.lV @ c
        u = self.V @ c + self.W.from_measurements(corr)
        resid = float(np.linalg.norm(self.W.whitened(corr)))
        bound = self.eps_n / self.beta if np.isfinite(self.eps_n) else math.nan
        return ReconstructionResult(Field(u, self.W.space_tag), c, None, self.n, self.beta, resid, bound)


def _measurements(omega_data, W: ObservationSpace) -> np.ndarray:
    if isinstance(omega_data, Field):
        return W.lmat @ omega_data.coeffs
    x = np.asarray(omega_data, float)
    return x if x.shape[0] == W.m else W.lmat @ x


def pbdw_v_star(omega_data, Vn, W: ObservationSpace) -> np.ndarray:
    """Coefficients of ``argmin_{v in V_n} |omega - P_W v|``.

    ``omega_data`` is either the measurement vector ``l(u)`` (length m) or an element
    of W given by its coefficients or as a Field.
    """
    return PBDWSolver(Vn, W).v_star(_measurements(omega_data, W))


def pbdw_reconstruct(omega, Vn, W: ObservationSpace, eps_n: float = math.nan) -> ReconstructionResult:
    """``u* = v* + omega - P_W v*``."""
    return PBDWSolver(Vn, W, eps_n=eps_n).reconstruct(_measurements(omega, W))


class PiecewisePBDW:
    """Dispatches queries to the cell of a trained PartitionGrid, caching per-cell solvers."""

    def __init__(self, grid: PartitionGrid, W: ObservationSpace):
        self.grid = grid
        self.W = W
        self._solvers = {}

    def solver(self, cell) -> PBDWSolver:
        if cell not in self._solvers:
            cm = self.grid.cells[cell]
            n = cm.n_star
            self._solvers[cell] = PBDWSolver(cm.basis.truncate(n), self.W, cm.lV[:, :n], cm.eps_curve[n])
        return self._solvers[cell]

    def __call__(self, omega, y_obs) -> ReconstructionResult:
        cell = self.grid.locate(*y_obs)
        res = self.solver(cell).reconstruct(_measurements(omega, self.W))
        res.cell_used = cell
        return res


def piecewise_reconstruct(omega, y_obs, grid: PartitionGrid, W: ObservationSpace) -> ReconstructionResult:
    """Reconstruct with the basis of the cell containing ``y_obs = (t, HR)``, truncated at n*."""
    return PiecewisePBDW(grid, W)(omega, y_obs)


# -- noisy data ------------------------------------------------------------------

def measurement_matrix(Vn, vox) -> np.ndarray:
    """The m x n matrix ``l_i(v_j)``; ``vox`` is a VoxelSet or an ObservationSpace."""
    V = _modes(Vn)
    lmat = vox.lmat if isinstance(vox, ObservationSpace) else vox.functional_matrix()
    return lmat @ V[: lmat.shape[1]]


def _ols(A: np.ndarray, z: np.ndarray) -> np.ndarray:
    m, n = A.shape
    if n > m:
        raise RankDeficient(f"n={n} exceeds m={m}")
    c, _, rank, _ = np.linalg.lstsq(A, np.asarray(z, float), rcond=None)
    if rank < n:
        raise RankDeficient(f"measurement matrix has rank {rank} < {n}")
    return c


def ls_unconstrained(z, Vn, vox, lV: Optional[np.ndarray] = None) -> np.ndarray:
    """Ordinary least squares ``min_c |z - l(V) c|_2``."""
    return _ols(measurement_matrix(Vn, vox) if lV is None else lV, z)


def ls_constrained(z, Vn, vox, bounds, lV: Optional[np.ndarray] = None,
                   max_iter: int = 5000, tol: float = 1e-10) -> np.ndarray:
    """Box-constrained least squares ``|c_j| <= bounds_j`` by spectral projected gradient.

    If the unconstrained minimizer is feasible it is returned as is.
    """
    A = measurement_matrix(Vn, vox) if lV is None else lV
    z = np.asarray(z, float)
    ub = np.asarray(bounds, float)
    if np.any(ub < 0):
        raise ValueError("bounds must be nonnegative")
    c0 = _ols(A, z)
    if np.all(np.abs(c0) <= ub):
        return c0
    return spg_box(A, z, -ub, ub, np.clip(c0, -ub, ub), max_iter=max_iter, tol=tol)


def spg_box(A, z, lo, hi, x0, max_iter: int = 5000, tol: float = 1e-10, memory: int = 10):
    """Nonmonotone spectral projected gradient for ``min 1/2 |A x - z|^2`` on a box."""
    AtA = A.T @ A
    Atz = A.T @ z
    proj = lambda x: np.clip(x, lo, hi)
    f = lambda x: 0.5 * float(x @ (AtA @ x)) - float(Atz @ x)
    x = proj(x0)
    gr = AtA @ x - Atz
    pg0 = np.linalg.norm(proj(x - gr) - x)
    thresh = tol * max(1.0, np.linalg.norm(gr), pg0)
    hist = [f(x)]
    lam = 1.0 / max(np.linalg.norm(AtA, 2), 1e-300)
    for it in range(max_iter):
        d = proj(x - lam * gr) - x
        pg = np.linalg.norm(proj(x - gr) - x)
        if pg <= thresh:
            return x
        fmax = max(hist[-memory:])
        gd = float(gr @ d)
        a = 1.0
        while True:
            xn = x + a * d
            fn = f(xn)
            if fn <= fmax + 1e-4 * a * gd or a < 1e-12:
                break
            a *= 0.5
        s = xn - x
        gn = AtA @ xn - Atz
        yv = gn - gr
        sy = float(s @ yv)
        lam = float(s @ s) / sy if sy > 0 else 1e10
        lam = min(max(lam, 1e-12), 1e12)
        x, gr = xn, gn
        hist.append(fn)
    raise SolverFail("projected gradient did not converge",
                     {"iterations": max_iter, "projected_gradient": float(pg), "threshold": float(thresh)})


def error_bound(beta: float, eps_n: float) -> float:
    if beta <= 0:
        raise ZeroBeta("beta must be positive for the a priori bound")
    return eps_n / beta
