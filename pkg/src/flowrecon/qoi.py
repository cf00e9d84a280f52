"""Derived quantities: pressure drops and their certificate, vorticity, WSS, Helmholtz projection."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid

from .errors import LinSolveError, NullspaceError, SingularF, SingularM
from .flow import _Saddle
from .geometry import FaceList, boundary_faces
from .mac import INLET, INTERIOR, OUTLET1, OUTLET2
from .spaces import Field, GramOperator, SpaceTag

MMHG = 1333.22  # dyn/cm^2


def _cached(layout, name, build):
    val = layout.__dict__.get(name)
    if val is None:
        val = build()
        layout.__dict__[name] = val
    return val


# -- pressure drop ------------------------------------------------------------------

def _boundary_mean_rows(domain, label: str, i_in: int, step: int) -> np.ndarray:
    L = domain.layout
    f = boundary_faces(domain, label)
    row = np.zeros(L.n_p)
    for j, ln in zip(f.cell_j, f.lengths):
        c1 = L.pidx[i_in, j]
        c2 = L.pidx[i_in + step, j] if 0 <= i_in + step < domain.nx else -1
        # linear extrapolation of the two nearest cell values onto the face
        if c2 >= 0:
            row[c1] += 1.5 * ln
            row[c2] -= 0.5 * ln
        else:
            row[c1] += ln
    return row / f.measure


def pressure_drop_matrix(domain) -> np.ndarray:
    """Rows ``delta p_k = mean_in p - mean_out_k p`` as a ``2 x n_p`` matrix."""
    def build():
        inlet = _boundary_mean_rows(domain, "Inlet", 0, 1)
        return np.vstack([inlet - _boundary_mean_rows(domain, lab, domain.nx - 1, -1)
                          for lab in ("Outlet1", "Outlet2")])
    return _cached(domain.layout, "_dp_matrix", build)


def pressure_drop(p, domain) -> np.ndarray:
    """Inlet-minus-outlet boundary means of a pressure field (or of the pressure block of a joint field)."""
    x = p.coeffs if isinstance(p, Field) else np.asarray(p, float)
    return pressure_drop_matrix(domain) @ x[-domain.layout.n_p:]


def dp_functional(domain, tag=SpaceTag.ProductUxP) -> np.ndarray:
    """Pressure-drop rows acting on coefficient vectors of the given space."""
    D = pressure_drop_matrix(domain)
    if SpaceTag(tag) == SpaceTag.PressureL2:
        return D
    return np.hstack([np.zeros((2, domain.layout.n_vel)), D])


# -- kappa certificate -----------------------------------------------------------

def kappa_estimate(Vn, W, probe_basis_size: int, dp_func: np.ndarray, probes: np.ndarray,
                   g: GramOperator, shift: float = 1e-12):
    """Stability constant of a pressure-drop functional on the orthogonal complement of W.

    Probes ``phi_i`` (columns of ``probes``) are projected onto the complement of W,
    G-orthonormalized, and the generalized eigenproblem ``Q eta = lambda M eta`` with
    ``M_ij = <(I-P_V) Psi_i, (I-P_V) Psi_j>`` and ``Q = q q^T``, ``q_i = dp(Psi_i)`` is
    solved for each functional row. Returns ``sqrt(lambda_max)`` per row.
    """
    V = getattr(Vn, "modes", Vn)
    n = V.shape[1]
    N = int(probe_basis_size)
    if N <= n:
        raise ValueError(f"probe basis size {N} must exceed n={n}")
    phi = np.asarray(probes, float)[:, :N]
    psi = phi - W.from_measurements(W.lmat @ phi)
    Y = g.whiten(psi)
    Qr, Rr = np.linalg.qr(Y)
    d = np.abs(np.diag(Rr))
    keep = np.flatnonzero(d > 1e-10 * d.max())
    Qr, Rr = Qr[:, keep], Rr[np.ix_(keep, keep)]
    q = np.atleast_2d(dp_func) @ psi[:, keep]
    q = sla.solve_triangular(Rr, q.T, trans="T").T   # dp of the orthonormal probes
    Vw = g.whiten(V)
    Rres = Qr - Vw @ (Vw.T @ Qr)
    M = Rres.T @ Rres
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M)
    tr = np.trace(M)

    def solve(Mx):
        out = []
        for qi in q:
            lam = sla.eigh(np.outer(qi, qi), Mx, eigvals_only=True)[-1]
            out.append(math.sqrt(max(lam, 0.0)))
        return np.array(out)

    if ev[0] < shift * tr:
        kreg = solve(M + shift * tr * np.eye(len(M)))
        raise SingularM(f"probe matrix M is singular (min eigenvalue {ev[0]:.2e})", kreg)
    return solve(M)


def dp_error_bound(kappa, eps_n):
    return 2.0 * np.asarray(kappa) * eps_n


# -- virtual works --------------------------------------------------------------

@dataclass
class StokesTestFields:
    v: list
    F: np.ndarray
    lam: list
    mass_residual: np.ndarray
    domain: object = field(repr=False, default=None)

    @property
    def offdiag_ratio(self) -> float:
        d = np.abs(np.diag(self.F))
        off = np.abs(self.F - np.diag(np.diag(self.F)))
        return float((off / d[:, None]).max())


def stokes_test_fields(domain) -> StokesTestFields:
    """Stokes fields with unit inflow, closed on all outlets but one (stress free there)."""
    L = domain.layout
    A = L.stiffness
    vs, lams = [], []
    for i in (0, 1):
        kind_i = OUTLET1 if i == 0 else OUTLET2
        unknown = np.isin(L.kind, (INTERIOR, kind_i))
        sad = _Saddle(L, unknown)
        uD = np.zeros(len(sad.Dd))
        uD[np.isin(sad.Dd, L.inlet_faces())] = 1.0
        v, lam = sad.solve(A, np.zeros(len(sad.U)), uD)
        vs.append(v)
        lams.append(lam)
    F = np.array([[L.outlet_flux(v)[j] for j in (0, 1)] for v in vs])
    mass = np.array([L.inlet_flux(v) + L.outlet_flux(v).sum() for v in vs])
    return StokesTestFields(vs, F, lams, mass, domain)


def _momentum_residual(L, u0, u1, rho, mu, dt):
    """Crank-Nicolson momentum residual without the pressure terms."""
    r = 0.5 * mu * (L.stiffness @ (u0 + u1))
    r += 0.5 * rho * (L.convection(u0) @ u0 + L.convection(u1) @ u1)
    if dt is not None and np.isfinite(dt):
        r += rho * L.mass * (u1 - u0) / dt
    return r


def vw_pressure_drop(u_traj: Sequence, tf: StokesTestFields, rho: float, mu: float, dt: float) -> np.ndarray:
    """Outlet-minus-inlet pressure ``x_k`` for every consecutive pair of velocity fields.

    Solves ``F x = H`` with ``H_k = -(K + I_conv + I_visc)`` tested against ``v_k``.
    The pressure drop of the boundary-mean definition is ``-x``.
    """
    if len(u_traj) < 2:
        raise ValueError("at least two time samples are required")
    L = tf.domain.layout
    d = np.diag(tf.F)
    if np.any(np.abs(d) < 1e-14 * max(np.abs(tf.F).max(), 1e-300)):
        raise SingularF("flux matrix F is singular")
    masks = [np.isin(L.kind, (INTERIOR, OUTLET1)), np.isin(L.kind, (INTERIOR, OUTLET2))]
    U = [np.asarray(u.coeffs if isinstance(u, Field) else u, float)[: L.n_vel] for u in u_traj]
    out = np.empty((len(U) - 1, 2))
    for n in range(len(U) - 1):
        r = _momentum_residual(L, U[n], U[n + 1], rho, mu, dt)
        H = np.array([-(tf.v[k][masks[k]] @ r[masks[k]]) for k in (0, 1)])
        out[n] = np.linalg.solve(tf.F, H) if not np.allclose(tf.F, np.diag(d)) else H / d
    return out


# -- vorticity ------------------------------------------------------------------

def _curl(domain):
    def build():
        L = domain.layout
        act = domain.active_mask
        I, J = np.meshgrid(np.arange(1, domain.nx), np.arange(1, domain.ny), indexing="ij")
        ok = act[I - 1, J - 1] & act[I, J - 1] & act[I - 1, J] & act[I, J]
        ii, jj = I[ok], J[ok]
        n = len(ii)
        rows = np.repeat(np.arange(n), 4)
        cols = np.stack([L.vi(ii, jj), L.vi(ii - 1, jj), L.ui(ii, jj), L.ui(ii, jj - 1)], 1).ravel()
        vals = np.tile([1 / L.hx, -1 / L.hx, -1 / L.hy, 1 / L.hy], n)
        C = sp.csr_matrix((vals, (rows, cols)), shape=(n, L.n_vel))
        return C, ii * L.hx, jj * L.hy
    return _cached(domain.layout, "_curl", build)


def vorticity(u, domain) -> np.ndarray:
    """Scalar curl ``dv/dx - du/dy`` at grid nodes surrounded by four active cells."""
    x = u.coeffs if isinstance(u, Field) else np.asarray(u, float)
    C, _, _ = _curl(domain)
    return C @ x[: domain.layout.n_vel]


def vorticity_nodes(domain):
    _, x, y = _curl(domain)
    return x, y


def vorticity_error(theta, theta_star, dt: float, domain) -> np.ndarray:
    """``|Theta(t) - Theta*(t)| / (int |Theta|^2 dt)^(1/2)`` for a trajectory (rows are times)."""
    w = domain.hx * domain.hy
    theta, theta_star = np.atleast_2d(theta), np.atleast_2d(theta_star)
    num = np.sqrt(w * ((theta - theta_star) ** 2).sum(1))
    sq = w * (theta ** 2).sum(1)
    den = math.sqrt(trapezoid(sq, dx=dt)) if len(sq) > 1 else math.sqrt(sq[0])
    return num / den if den > 0 else np.zeros_like(num)


def curl_constant(domain, g: GramOperator) -> float:
    """``sup_v |curl v|_{L2} / |v|_U`` of the discrete curl (largest generalized eigenvalue)."""
    C, _, _ = _curl(domain)
    K = (C.T @ C) * (domain.hx * domain.hy)
    G = g.matrix[: domain.layout.n_vel, : domain.layout.n_vel]
    lam = spla.eigsh(K.tocsc(), k=1, M=G.tocsc(), which="LA", return_eigenvectors=False)[0]
    return float(math.sqrt(max(lam, 0.0)))


# -- wall shear stress ----------------------------------------------------------------

@dataclass
class WallTrace:
    S: np.ndarray           # k x 2
    faces: FaceList

    def mean(self) -> np.ndarray:
        w = self.faces.lengths
        return (w[:, None] * self.S).sum(0) / w.sum()


def _wss_stencil(domain):
    def build():
        L = domain.layout
        f = boundary_faces(domain, "Wall")
        k = len(f)
        rows, cols, vals = [], [], []
        tcomp = np.zeros(k, int)
        off = {"W": (1, 0), "E": (-1, 0), "S": (0, 1), "N": (0, -1)}   # inward step
        for r in range(k):
            i, j, s = f.cell_i[r], f.cell_j[r], f.side[r]
            di, dj = off[s]
            h = L.hx if s in "WE" else L.hy
            comp = 1 if s in "WE" else 0
            tcomp[r] = comp

            def center(ci, cj):
                # tangential velocity component at the center of cell (ci, cj)
                if comp == 0:
                    return [L.ui(ci, cj), L.ui(ci + 1, cj)]
                return [L.vi(ci, cj), L.vi(ci, cj + 1)]

            i2, j2 = i + di, j + dj
            second = 0 <= i2 < domain.nx and 0 <= j2 < domain.ny and domain.active_mask[i2, j2]
            # derivative along the inward normal: (9 q1 - q2) / (3 h), or 2 q1 / h
            w1, w2 = (3.0 / h, -1.0 / (3 * h)) if second else (2.0 / h, 0.0)
            for c in center(i, j):
                rows.append(r); cols.append(c); vals.append(0.5 * w1)
            if second:
                for c in center(i2, j2):
                    rows.append(r); cols.append(c); vals.append(0.5 * w2)
        keep = np.asarray(cols) >= 0
        Dn = sp.csr_matrix((np.asarray(vals)[keep], (np.asarray(rows)[keep], np.asarray(cols)[keep])),
                           shape=(k, L.n_vel))
        return f, Dn, tcomp
    return _cached(domain.layout, "_wss", build)


def wss(u, domain, mu: float) -> WallTrace:
    """``2 mu (I - n n^T) eps(u) n`` on wall faces from one-sided normal derivatives."""
    x = u.coeffs if isinstance(u, Field) else np.asarray(u, float)
    f, Dn, tcomp = _wss_stencil(domain)
    d_in = Dn @ x[: domain.layout.n_vel]
    S = np.zeros((len(f), 2))
    # tangential derivatives vanish on a no-slip wall, so eps n reduces to (1/2) dq/dn t
    S[np.arange(len(f)), tcomp] = -mu * d_in
    return WallTrace(S, f)


def _neumann(domain):
    def build():
        L = domain.layout
        rows, cols, vals = [], [], []
        for a in range(L.n_p):
            i, j = L.c_i[a], L.c_j[a]
            for di, dj, w in ((1, 0, L.hy / L.hx), (0, 1, L.hx / L.hy)):
                i2, j2 = i + di, j + dj
                if i2 < domain.nx and j2 < domain.ny and domain.active_mask[i2, j2]:
                    b = L.pidx[i2, j2]
                    rows += [a, a, b, b]; cols += [a, b, a, b]; vals += [w, -w, -w, w]
        Lap = sp.csr_matrix((vals, (rows, cols)), shape=(L.n_p, L.n_p))
        area = np.full((L.n_p, 1), domain.cell_area)
        M = sp.bmat([[Lap, sp.csr_matrix(area)], [sp.csr_matrix(area.T), None]], format="csc")
        return spla.splu(M)
    return _cached(domain.layout, "_neumann", build)


def neumann_solve(domain, lam: np.ndarray, faces: FaceList, tol: float = 1e-8) -> np.ndarray:
    """Zero-mean cell-centered solution of ``int grad phi . grad v = int_wall lam . v``."""
    L = domain.layout
    lam = np.atleast_2d(np.asarray(lam, float).T).T
    b = np.zeros((L.n_p, lam.shape[1]))
    np.add.at(b, L.pidx[faces.cell_i, faces.cell_j], lam * faces.lengths[:, None])
    scale = np.abs(b).sum(0).max()
    if np.abs(b.sum(0)).max() > tol * max(scale, 1e-300) and scale > 0:
        raise NullspaceError("Neumann data does not have zero mean")
    lu = _neumann(domain)
    try:
        sol = lu.solve(np.vstack([b, np.zeros((1, b.shape[1]))]))
    except RuntimeError as exc:
        raise LinSolveError(str(exc)) from exc
    return sol[:-1]


def _trace_norm(phi: np.ndarray, domain, faces: FaceList) -> float:
    vals = phi[domain.layout.pidx[faces.cell_i, faces.cell_j]]
    return float(math.sqrt((faces.lengths[:, None] * vals ** 2).sum()))


def wss_error(u, u_star, domain, mu: float) -> float:
    """Computable relative WSS error with the Neumann-lifted trace surrogate norm."""
    S = wss(u, domain, mu)
    Ss = wss(u_star, domain, mu)
    Sb, Ssb = S.mean(), Ss.mean()
    lam1 = S.S - Ss.S - (Sb - Ssb)
    lam2 = S.S - Sb
    f = S.faces
    num = _trace_norm(neumann_solve(domain, lam1, f), domain, f) + np.linalg.norm(Sb - Ssb)
    den = _trace_norm(neumann_solve(domain, lam2, f), domain, f) + np.linalg.norm(Sb)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return float(num / den)


# -- Helmholtz projection ----------------------------------------------------------------

def _gradient(domain) -> sp.csr_matrix:
    """Face gradient of a cell field, with phi = 0 on the inlet and no flux elsewhere."""
    def build():
        L = domain.layout
        rows, cols, vals = [], [], []
        for f in np.flatnonzero(L.kind == INTERIOR):
            if f < L.n_u:
                i, j = L.u_i[f], L.u_j[f]
                a, b, h = L.pidx[i - 1, j], L.pidx[i, j], L.hx
            else:
                i, j = L.v_i[f - L.n_u], L.v_j[f - L.n_u]
                a, b, h = L.pidx[i, j - 1], L.pidx[i, j], L.hy
            rows += [f, f]; cols += [b, a]; vals += [1 / h, -1 / h]
        for f in L.inlet_faces():
            rows.append(f); cols.append(L.pidx[0, L.u_j[f]]); vals.append(2 / L.hx)
        return sp.csr_matrix((vals, (rows, cols)), shape=(L.n_vel, L.n_p))
    return _cached(domain.layout, "_grad", build)


def helmholtz_project(u_star, domain):
    """``u* + grad phi`` with ``-div grad phi = div u*``, phi = 0 on the inlet, Neumann elsewhere."""
    L = domain.layout
    is_field = isinstance(u_star, Field)
    x = u_star.coeffs if is_field else np.asarray(u_star, float)
    vel = x[: L.n_vel]
    G = _gradient(domain)
    lu = _cached(L, "_helm_lu", lambda: spla.splu((L.div @ G).tocsc()))
    try:
        phi = lu.solve(-(L.div @ vel))
    except RuntimeError as exc:
        raise LinSolveError(str(exc)) from exc
    out = x.copy()
    out[: L.n_vel] = vel + G @ phi
    return Field(out, u_star.space_tag) if is_field else out


def divergence_norm(u, domain) -> float:
    x = u.coeffs if isinstance(u, Field) else np.asarray(u, float)
    return float(np.linalg.norm(domain.layout.div @ x[: domain.layout.n_vel]))


@dataclass
class QoIReport:
    dp: np.ndarray
    kappa: float
    vort_err: float
    wss_err: float
    div_before: float
    div_after: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dp"] = (np.asarray(self.dp) / MMHG).tolist()
        d["dp_units"] = "mmHg"
        d["kappa"] = np.asarray(self.kappa).tolist()
        return d
