"""Offline phase: POD bases, width curves and the piecewise partition over (t, HR)."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import EmptyCell, OutOfRange, RankDeficient
from .spaces import Field, GramOperator, SpaceTag

log = logging.getLogger(__name__)

HR_RANGE = (48.0, 120.0)
N_CAP = 60
SV_RTOL = 1e-12
SCORE_FLOOR = 1e-9


@dataclass
class ReducedBasis:
    modes: np.ndarray              # dim x n, G-orthonormal columns
    singular_values: np.ndarray    # full nonincreasing spectrum of the snapshot set
    space_tag: SpaceTag
    rank_deficient: bool = False

    @property
    def n(self) -> int:
        return self.modes.shape[1]

    def truncate(self, n: int) -> "ReducedBasis":
        return ReducedBasis(self.modes[:, :n], self.singular_values, self.space_tag, self.rank_deficient)


def _as_matrix(snaps, g: Optional[GramOperator] = None) -> np.ndarray:
    if isinstance(snaps, np.ndarray):
        X = snaps
    else:
        cols = []
        for s in snaps:
            if isinstance(s, Field):
                if g is not None and s.space_tag != g.space_tag:
                    from .errors import TagMismatch
                    raise TagMismatch("snapshot tag does not match the Gram operator")
                cols.append(s.coeffs)
            else:
                cols.append(np.asarray(s, float))
        X = np.column_stack(cols)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def _pod_whitened(Y: np.ndarray, n_max: int):
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    rank = int(np.sum(s > SV_RTOL * s[0])) if s.size and s[0] > 0 else 0
    return U[:, : min(n_max, rank)], s, rank


def pod_basis(snaps, g: GramOperator, n_max: int, strict: bool = False) -> ReducedBasis:
    """POD in the G inner product by an SVD of the whitened snapshot matrix.

    If the snapshots span fewer than ``n_max`` directions the achievable rank is
    returned with ``rank_deficient=True`` (``strict=True`` raises instead).
    """
    X = _as_matrix(snaps, g)
    if n_max > min(X.shape):
        raise ValueError(f"n_max={n_max} exceeds min(count, unknowns)={min(X.shape)}")
    Uw, s, rank = _pod_whitened(g.whiten(X), n_max)
    deficient = rank < n_max
    if deficient:
        if strict:
            raise RankDeficient(f"snapshot set has rank {rank} < {n_max}")
        warnings.warn(f"snapshot set has rank {rank} < {n_max}; basis truncated", RuntimeWarning)
    return ReducedBasis(g.unwhiten(Uw), s, g.space_tag, deficient)


def _residual_curves(Uw: np.ndarray, Y: np.ndarray):
    """Projection-error norms of the columns of Y for n = 0..k nested modes."""
    k = Uw.shape[1]
    r = Y.copy()
    err = np.empty((k + 1, Y.shape[1]))
    err[0] = np.linalg.norm(r, axis=0)
    for j in range(k):
        r -= np.outer(Uw[:, j], Uw[:, j] @ r)
        err[j + 1] = np.linalg.norm(r, axis=0)
    return err


def eps_curve(basis: ReducedBasis, test_snaps, g: GramOperator):
    """Worst-case and RMS projection errors, indexed by the number of modes n = 0..basis.n."""
    X = _as_matrix(test_snaps, g)
    if X.shape[1] == 0:
        raise ValueError("test set is empty")
    err = _residual_curves(g.whiten(basis.modes), g.whiten(X))
    return _monotone(err.max(axis=1)), _monotone(np.sqrt((err ** 2).mean(axis=1)))


def _monotone(c: np.ndarray) -> np.ndarray:
    # rounding can break nestedness at the 1e-16 level
    return np.minimum.accumulate(c)


def select_n_star(eps: np.ndarray, beta: np.ndarray, rtol: float = 1e-12) -> int:
    """argmin over n >= 1 of eps[n] / beta[n] (arrays indexed by n), ties to the smaller n."""
    e = np.asarray(eps, float)[1:]
    b = np.asarray(beta, float)[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(b > 0, e / b, np.inf)
    best = ratio.min()
    return int(np.flatnonzero(ratio <= best * (1 + rtol) + 1e-300)[0]) + 1


def beta_curve(lV: np.ndarray, W) -> np.ndarray:
    """beta(V_n, W) for n = 0..k from the measurements of G-orthonormal modes; beta[0] = 1."""
    C = W.whitened(lV)
    k = C.shape[1]
    out = np.ones(k + 1)
    for n in range(1, k + 1):
        out[n] = 0.0 if n > C.shape[0] else np.linalg.svd(C[:, :n], compute_uv=False)[-1]
    return np.clip(out, 0.0, 1.0)


# -- partition -------------------------------------------------------------------

def _snap_index(x: float, K: int) -> int:
    r = round(x)
    if abs(x - r) < 1e-9:
        x = r
    return min(int(math.floor(x)), K - 1)


def cell_of(phase: float, HR: float, K: int, K_prime: int) -> tuple:
    """Half-open cell membership in [0,1] x [48,120] (last cell closed); ``phase = t/T``."""
    if not (-1e-12 <= phase <= 1 + 1e-12) or not (HR_RANGE[0] <= HR <= HR_RANGE[1]):
        raise OutOfRange(f"observed parameters (t/T={phase}, HR={HR}) outside the partition")
    k = _snap_index(K * min(max(phase, 0.0), 1.0), K)
    kp = _snap_index(K_prime * (HR - HR_RANGE[0]) / (HR_RANGE[1] - HR_RANGE[0]), K_prime)
    return k, kp


class TrainingSet:
    """Snapshots of one space prepared for repeated partition scoring."""

    def __init__(self, X: np.ndarray, params: np.ndarray, g: GramOperator, W=None):
        self.X = X
        self.params = np.asarray(params, float)
        self.g = g
        self.Y = g.whiten(X)
        self.phase = self.params[:, 0] / (60.0 / self.params[:, 1])
        self.HR = self.params[:, 1]
        self.lX = None if W is None else W.lmat @ X

    @classmethod
    def from_manifold(cls, manifold, g: GramOperator, W=None) -> "TrainingSet":
        X = manifold.joint_matrix() if g.space_tag == SpaceTag.ProductUxP else manifold.velocity_matrix()
        return cls(X, manifold.parameter_table, g, W)

    def __len__(self) -> int:
        return self.X.shape[1]

    def cells(self, K: int, K_prime: int) -> np.ndarray:
        return np.array([cell_of(p, h, K, K_prime) for p, h in zip(self.phase, self.HR)]).reshape(-1, 2)


@dataclass
class CellModel:
    basis: ReducedBasis
    eps_curve: np.ndarray
    delta_curve: np.ndarray
    beta_curve: np.ndarray
    n_star: int
    count: int
    lV: np.ndarray                 # measurements of the modes, m x n
    kappa: Optional[np.ndarray] = None
    coef_bounds: Optional[np.ndarray] = None

    @property
    def score(self) -> float:
        b = self.beta_curve[self.n_star]
        return self.eps_curve[self.n_star] / b if b > 0 else math.inf


@dataclass
class PartitionGrid:
    K: int
    K_prime: int
    cells: dict
    ranges: tuple = ((0.0, 1.0), HR_RANGE)
    space_tag: SpaceTag = SpaceTag.VelocityH1
    scores: dict = field(default_factory=dict)

    def locate(self, t: float, HR: float) -> tuple:
        if not HR_RANGE[0] <= HR <= HR_RANGE[1]:
            raise OutOfRange(f"HR={HR} outside {HR_RANGE}")
        T = 60.0 / HR
        if not 0 <= t <= T * (1 + 1e-12):
            raise OutOfRange(f"t={t} outside [0, {T}]")
        return cell_of(t / T, HR, self.K, self.K_prime)

    @property
    def score(self) -> float:
        return max(c.score for c in self.cells.values())


def _build_cells(train: TrainingSet, W, K: int, K_prime: int, validation: Optional[TrainingSet],
                 n_cap: int = N_CAP) -> dict:
    ids = train.cells(K, K_prime)
    vids = validation.cells(K, K_prime) if validation is not None else None
    bad = []
    for k in range(K):
        for kp in range(K_prime):
            cnt = np.sum((ids[:, 0] == k) & (ids[:, 1] == kp))
            vcnt = np.sum((vids[:, 0] == k) & (vids[:, 1] == kp)) if vids is not None else 1
            if cnt < 2 or vcnt < 1:
                bad.append((k, kp))
    if bad:
        raise EmptyCell(bad, K, K_prime)
    cells = {}
    for k in range(K):
        for kp in range(K_prime):
            sel = np.flatnonzero((ids[:, 0] == k) & (ids[:, 1] == kp))
            cap = min(W.m, len(sel), n_cap)
            Uw, s, rank = _pod_whitened(train.Y[:, sel], cap)
            Ytest = train.Y[:, sel]
            if validation is not None:
                vsel = np.flatnonzero((vids[:, 0] == k) & (vids[:, 1] == kp))
                Ytest = np.hstack([Ytest, validation.Y[:, vsel]])
            err = _residual_curves(Uw, Ytest)
            eps = _monotone(err.max(axis=1))
            delta = _monotone(np.sqrt((err ** 2).mean(axis=1)))
            modes = train.g.unwhiten(Uw)
            lV = W.lmat @ modes
            beta = beta_curve(lV, W)
            basis = ReducedBasis(modes, s, train.g.space_tag, rank < cap)
            cells[(k, kp)] = CellModel(basis, eps, delta, beta, select_n_star(eps, beta), len(sel), lV)
    return cells


def _prepare(manifold, W, g) -> TrainingSet:
    if isinstance(manifold, TrainingSet) or manifold is None:
        return manifold
    return TrainingSet.from_manifold(manifold, g, W)


def build_partition(manifold, W, K: int, K_prime: int, g: Optional[GramOperator] = None,
                    validation=None, n_cap: int = N_CAP) -> PartitionGrid:
    train = _prepare(manifold, W, g)
    val = _prepare(validation, W, train.g)
    cells = _build_cells(train, W, K, K_prime, val, n_cap)
    return PartitionGrid(K, K_prime, cells, space_tag=train.g.space_tag)


def partition_score(manifold, W, K: int, K_prime: int, g: Optional[GramOperator] = None,
                    validation=None, n_cap: int = N_CAP) -> float:
    """``max over cells of min_n eps_n / beta_n`` for a K x K' partition.

    ``eps_n`` is the worst projection error over the cell's training snapshots and,
    when given, the validation snapshots falling in the cell.
    """
    return build_partition(manifold, W, K, K_prime, g, validation, n_cap).score


def select_partition(manifold, W, K_range: Iterable[int], K_prime_range: Iterable[int],
                     g: Optional[GramOperator] = None, validation=None,
                     n_cap: int = N_CAP) -> PartitionGrid:
    """Exhaustive search; ties go to the smaller K + K' and then the smaller K."""
    train = _prepare(manifold, W, g)
    val = _prepare(validation, W, train.g)
    # scores below round-off of the data count as exact ties
    floor = SCORE_FLOOR * float(np.linalg.norm(train.Y, axis=0).max())
    best, best_key, scores, skipped = None, None, {}, []
    for K in K_range:
        for Kp in K_prime_range:
            try:
                grid = PartitionGrid(K, Kp, _build_cells(train, W, K, Kp, val, n_cap), space_tag=train.g.space_tag)
            except EmptyCell as exc:
                log.info("partition (%d, %d) skipped: %s", K, Kp, exc)
                skipped.append((K, Kp))
                continue
            sc = grid.score
            scores[(K, Kp)] = sc
            key = (max(sc, floor), K + Kp, K)
            if best is None or _better(key, best_key):
                best, best_key = grid, key
    if best is None:
        raise EmptyCell(skipped)
    best.scores = scores
    return best


def _better(a, b, rtol: float = 1e-12) -> bool:
    if a[0] < b[0] * (1 - rtol):
        return True
    if a[0] <= b[0] * (1 + rtol):
        return a[1:] < b[1:]
    return False


def coefficient_bounds(basis: ReducedBasis, X: np.ndarray, g: GramOperator,
                       lV: Optional[np.ndarray] = None, lX: Optional[np.ndarray] = None) -> np.ndarray:
    """``max_u |<u, v_j>|`` over the columns of X for every mode.

    With the measurements ``lV`` (modes) and ``lX`` (snapshots) the box is widened to
    contain the noiseless least-squares coefficients of every snapshot for every
    truncation n, so noiseless training data never activates a constraint.
    """
    ub = np.abs(basis.modes.T @ (g.matrix @ X)).max(axis=1)
    if lV is not None and lX is not None:
        for n in range(1, min(basis.n, lV.shape[0]) + 1):
            C = np.linalg.lstsq(lV[:, :n], lX, rcond=None)[0]
            ub[:n] = np.maximum(ub[:n], np.abs(C).max(axis=1))
    return ub
