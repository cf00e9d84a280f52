"""Staggered (MAC) indexing and the discrete operators shared by the solver and the norms.

Velocity unknowns live on faces: ``u`` on vertical faces ``(i, j)``, ``0 <= i <= nx``
(flat id ``j*(nx+1)+i``) and ``v`` on horizontal faces ``(i, j)``, ``0 <= j <= ny``
(flat id ``j*nx+i``). A face is kept when at least one adjacent cell is active.
Pressure lives on active cells (flat id ``j*nx+i``). A velocity vector is ``[u, v]``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

INTERIOR, INLET, OUTLET1, OUTLET2, WALL = range(5)
KIND_NAMES = ("interior", "inlet", "outlet1", "outlet2", "wall")

# neighbour codes for the upwind stencil
GHOST = -1  # no-slip wall half a cell away: mirrored value -u_f
COPY = -2   # zero normal gradient (outflow): neighbour value equals u_f


def _coo(rows, cols, vals, shape):
    return sp.coo_matrix((np.asarray(vals, float), (np.asarray(rows), np.asarray(cols))), shape=shape).tocsr()


class MacLayout:
    """Index maps, weights and sparse operators of the staggered grid on a domain."""

    def __init__(self, domain):
        self.domain = domain
        nx, ny = domain.nx, domain.ny
        hx, hy = domain.hx, domain.hy
        self.nx, self.ny, self.hx, self.hy = nx, ny, hx, hy
        act = domain.active_mask
        self.active = act

        padded = np.pad(act, 2, constant_values=False)

        def cell(i, j):
            return padded[np.clip(np.asarray(i) + 2, 0, nx + 3), np.clip(np.asarray(j) + 2, 0, ny + 3)]

        self._cell = cell

        # u faces
        I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny), indexing="ij")
        left, right = cell(I - 1, J), cell(I, J)
        umask = left | right
        jj, ii = np.nonzero(umask.T)  # row-major in j
        self.u_i, self.u_j = ii, jj
        self.n_u = len(ii)
        self.uidx = -np.ones((nx + 1, ny), int)
        self.uidx[ii, jj] = np.arange(self.n_u)
        lu, ru = left[ii, jj], right[ii, jj]
        ukind = np.full(self.n_u, WALL)
        ukind[lu & ru] = INTERIOR
        ukind[(ii == 0) & ru] = INLET
        out_lab = {}
        f = domain.faces
        for k in range(len(f)):
            if f.side[k] == "E" and f.label[k] in ("Outlet1", "Outlet2"):
                out_lab[f.cell_j[k]] = OUTLET1 if f.label[k] == "Outlet1" else OUTLET2
        for n in np.flatnonzero((ii == nx) & lu):
            ukind[n] = out_lab[jj[n]]
        self.u_left, self.u_right = lu, ru

        # v faces
        I, J = np.meshgrid(np.arange(nx), np.arange(ny + 1), indexing="ij")
        below, above = cell(I, J - 1), cell(I, J)
        vmask = below | above
        jj, ii = np.nonzero(vmask.T)
        self.v_i, self.v_j = ii, jj
        self.n_v = len(ii)
        self.vidx = -np.ones((nx, ny + 1), int)
        self.vidx[ii, jj] = np.arange(self.n_v)
        bv, av = below[ii, jj], above[ii, jj]
        vkind = np.full(self.n_v, WALL)
        vkind[bv & av] = INTERIOR
        self.v_below, self.v_above = bv, av

        self._upad = np.pad(self.uidx, 2, constant_values=-1)
        vv = np.where(self.vidx >= 0, self.vidx + self.n_u, -1)
        self._vpad = np.pad(vv, 2, constant_values=-1)
        self.kind = np.concatenate([ukind, vkind])
        self.n_vel = self.n_u + self.n_v
        self.is_u = np.arange(self.n_vel) < self.n_u

        # cells
        jj, ii = np.nonzero(act.T)
        self.c_i, self.c_j = ii, jj
        self.n_p = len(ii)
        self.pidx = -np.ones((nx, ny), int)
        self.pidx[ii, jj] = np.arange(self.n_p)

        # control volumes (velocity mass lumping)
        self.mass = np.concatenate([
            hy * 0.5 * hx * (lu.astype(float) + ru),
            hx * 0.5 * hy * (bv.astype(float) + av),
        ])
        self.face_x = np.concatenate([self.u_i * hx, (self.v_i + 0.5) * hx])
        self.face_y = np.concatenate([(self.u_j + 0.5) * hy, self.v_j * hy])
        self.cell_x = (self.c_i + 0.5) * hx
        self.cell_y = (self.c_j + 0.5) * hy

        self.unknown = np.isin(self.kind, (INTERIOR, OUTLET1, OUTLET2))
        self.stiffness = self._stiffness()
        self.div = self._divergence()
        self.to_cell_x, self.to_cell_y = self._cell_interp()
        self._upwind_tables()

    # -- helpers -----------------------------------------------------------------
    def ui(self, i, j):
        """Velocity-vector index of u face ``(i, j)``, -1 if absent."""
        return self._upad[np.clip(np.asarray(i) + 2, 0, self.nx + 4), np.clip(np.asarray(j) + 2, 0, self.ny + 3)]

    def vi(self, i, j):
        """Velocity-vector index of v face ``(i, j)``, -1 if absent."""
        return self._vpad[np.clip(np.asarray(i) + 2, 0, self.nx + 3), np.clip(np.asarray(j) + 2, 0, self.ny + 4)]

    def faces_of(self, *kinds) -> np.ndarray:
        return np.flatnonzero(np.isin(self.kind, kinds))

    # -- operators ---------------------------------------------------------------
    def _stiffness(self) -> sp.csr_matrix:
        """Symmetric matrix of the discrete Dirichlet form sum_K int |grad u|^2 + |grad v|^2."""
        hx, hy, cell = self.hx, self.hy, self._cell
        rows, cols, vals = [], [], []

        def edge(a, b, w):
            rows.extend([a, a, b, b]); cols.extend([a, b, a, b])
            vals.extend([w, -w, -w, w])

        def diag(a, w):
            rows.extend([a]); cols.extend([a]); vals.extend([w])

        # d/dx of u across each active cell, d/dy of v across each active cell
        for i, j in zip(self.c_i, self.c_j):
            edge(self.ui(i, j), self.ui(i + 1, j), hy / hx)
            edge(self.vi(i, j), self.vi(i, j + 1), hx / hy)
        # d/dy of u: dual edge between u(i,j) and u(i,j+1), split into two half columns
        for n in range(self.n_u):
            i, j = self.u_i[n], self.u_j[n]
            for c in (i - 1, i):
                if not cell(c, j):
                    continue
                up = self.ui(i, j + 1)
                if cell(c, j + 1):
                    edge(n, int(up), 0.5 * hx / hy)
                else:
                    diag(n, hx / hy)
                if not cell(c, j - 1):
                    diag(n, hx / hy)
        # d/dx of v: dual edge between v(i,j) and v(i+1,j), split into two half rows
        for n in range(self.n_v):
            i, j = self.v_i[n], self.v_j[n]
            a = n + self.n_u
            for r in (j - 1, j):
                if not cell(i, r):
                    continue
                if cell(i + 1, r):
                    edge(a, int(self.vi(i + 1, j)), 0.5 * hy / hx)
                elif i + 1 < self.nx:
                    diag(a, hy / hx)       # wall beside
                # i + 1 == nx: outflow, natural condition
                if i == 0:
                    diag(a, hy / hx)       # inlet: tangential velocity vanishes
                elif not cell(i - 1, r):
                    diag(a, hy / hx)
        A = _coo(rows, cols, vals, (self.n_vel, self.n_vel))
        return ((A + A.T) * 0.5).tocsr()

    def _divergence(self) -> sp.csr_matrix:
        """Integrated divergence per active cell (outward flux)."""
        i, j = self.c_i, self.c_j
        rows = np.repeat(np.arange(self.n_p), 4)
        cols = np.stack([self.ui(i + 1, j), self.ui(i, j), self.vi(i, j + 1), self.vi(i, j)], axis=1).ravel()
        vals = np.tile([self.hy, -self.hy, self.hx, -self.hx], self.n_p)
        return _coo(rows, cols, vals, (self.n_p, self.n_vel))

    def _cell_interp(self):
        i, j = self.c_i, self.c_j
        r = np.repeat(np.arange(self.n_p), 2)
        cx = np.stack([self.ui(i, j), self.ui(i + 1, j)], 1).ravel()
        cy = np.stack([self.vi(i, j), self.vi(i, j + 1)], 1).ravel()
        shape = (self.n_p, self.n_vel)
        return _coo(r, cx, np.full(len(r), 0.5), shape), _coo(r, cy, np.full(len(r), 0.5), shape)

    def _upwind_tables(self):
        nu = self.n_u
        ui, uj, vi_, vj = self.u_i, self.u_j, self.v_i, self.v_j
        # u faces
        w = self.ui(ui - 1, uj)
        e = self.ui(ui + 1, uj)
        s = self.ui(ui, uj - 1)
        n = self.ui(ui, uj + 1)
        e[(ui == self.nx)] = COPY
        w[(ui == 0)] = COPY
        u_nb = np.stack([w, e, s, n], 1)
        u_nb[u_nb == -1] = GHOST
        u_cross = np.stack([self.vi(ui - 1, uj), self.vi(ui, uj), self.vi(ui - 1, uj + 1), self.vi(ui, uj + 1)], 1)
        # v faces
        w = self.vi(vi_ - 1, vj)
        e = self.vi(vi_ + 1, vj)
        s = self.vi(vi_, vj - 1)
        n = self.vi(vi_, vj + 1)
        e[(vi_ == self.nx - 1)] = COPY
        v_nb = np.stack([w, e, s, n], 1)
        v_nb[v_nb == -1] = GHOST
        v_cross = np.stack([self.ui(vi_, vj - 1), self.ui(vi_ + 1, vj - 1), self.ui(vi_, vj), self.ui(vi_ + 1, vj)], 1)
        self.nb = np.concatenate([u_nb, v_nb])
        self.cross = np.concatenate([u_cross, v_cross])
        self._rows_conv = np.flatnonzero(self.unknown)

    def convection(self, a: np.ndarray) -> sp.csr_matrix:
        """First-order upwind matrix of ``W (a . grad) u`` with lagged advecting field ``a``.

        Rows are filled for unknown faces only.
        """
        rows = self._rows_conv
        nu = self.n_u
        cr = self.cross[rows]
        other = np.where(cr >= 0, a[np.maximum(cr, 0)], 0.0).sum(1) * 0.25
        own = a[rows]
        isu = rows < nu
        ax = np.where(isu, own, other)
        ay = np.where(isu, other, own)
        nb = self.nb[rows]
        R, C, V = [], [], []
        for comp, h, lo, hi in ((ax, self.hx, 0, 1), (ay, self.hy, 2, 3)):
            c = np.abs(comp) / h * self.mass[rows]
            up = np.where(comp >= 0, nb[:, lo], nb[:, hi])
            reg = up >= 0
            ghost = up == GHOST
            R += [rows, rows[reg]]
            C += [rows, up[reg]]
            V += [c + np.where(ghost, c, 0.0) - np.where(up == COPY, c, 0.0), -c[reg]]
        return _coo(np.concatenate(R), np.concatenate(C), np.concatenate(V), (self.n_vel, self.n_vel))

    # -- boundary data -----------------------------------------------------------
    def inlet_faces(self) -> np.ndarray:
        return self.faces_of(INLET)

    def outlet_faces(self, k: int) -> np.ndarray:
        return self.faces_of(OUTLET1 if k == 0 else OUTLET2)

    def outlet_flux(self, vel: np.ndarray) -> np.ndarray:
        return np.array([self.hy * vel[self.outlet_faces(k)].sum() for k in (0, 1)])

    def inlet_flux(self, vel: np.ndarray) -> float:
        """Outward flux through the inlet (negative for inflow)."""
        return -self.hy * float(vel[self.inlet_faces()].sum())

    def cell_velocity(self, vel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.to_cell_x @ vel, self.to_cell_y @ vel
