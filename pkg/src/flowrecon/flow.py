"""Forward model: semi-implicit Navier-Stokes on the MAC grid with Windkessel outlets.

Units are CGS. The 2D domain is read as a slab of unit depth, so fluxes are cm^2/s
and the Windkessel constants keep their nominal values.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .errors import ConfigError, DomainError, LinSolveError, NumericalError, SolverError, StabilityError
from .mac import INLET, OUTLET1, OUTLET2, WALL

log = logging.getLogger(__name__)

PARAM_NAMES = ("t", "HR", "s", "T_sys", "u0", "eta")
RANGES = {
    "HR": (48.0, 120.0),
    "s": (0.0, 0.2),
    "T_sys": (0.2863, 0.3182),
    "u0": (17.0, 20.0),
    "eta": (0.5, 1.5),
}
G_BASE = 0.2
G_DICROTIC = 0.15


@dataclass(frozen=True)
class FlowParams:
    t: float = 0.0
    HR: float = 70.0
    s: float = 0.0
    T_sys: float = 0.3
    u0: float = 18.0
    eta: float = 1.0
    rho: float = 1.0
    mu: float = 0.03

    @property
    def period(self) -> float:
        return 60.0 / self.HR

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in PARAM_NAMES])

    def check(self) -> None:
        for k, (lo, hi) in RANGES.items():
            v = getattr(self, k)
            if not lo <= v <= hi:
                raise ConfigError(f"{k}={v} outside [{lo}, {hi}]")
        if not 0 <= self.t <= self.period:
            raise ConfigError(f"t={self.t} outside [0, {self.period}]")
        if self.rho <= 0 or self.mu <= 0:
            raise ConfigError("rho and mu must be positive")


@dataclass(frozen=True)
class WindkesselState:
    p_d: np.ndarray
    C_d: np.ndarray
    R_p: np.ndarray
    R_d: np.ndarray

    def __post_init__(self):
        for name in ("C_d", "R_d"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise ConfigError(f"Windkessel {name} must be positive")
        if np.any(np.asarray(self.R_p) < 0):
            raise ConfigError("Windkessel R_p must be nonnegative")


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 2e-3
    n_cycles: int = 2
    n_save: Optional[int] = 25
    C_d: float = 1.6e-5
    R_p: float = 7501.5
    R_d1: float = 60012.0
    p_d0: float = 1.06e5
    rp_coupling: str = "implicit"     # or "explicit" (literal lagged flux)
    windkessel_form: str = "consistent"  # or "literal"
    cfl_max: float = 1.0
    blowup: float = 1e6

    def windkessel(self, eta: float) -> WindkesselState:
        return WindkesselState(
            p_d=np.full(2, self.p_d0),
            C_d=np.full(2, self.C_d),
            R_p=np.full(2, self.R_p),
            R_d=np.array([self.R_d1, self.R_d1 / eta]),
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Snapshot:
    u: np.ndarray
    p: np.ndarray
    y: FlowParams
    cycle_index: int = 1
    div_norm: float = 0.0
    outlet_pressure: Optional[np.ndarray] = None

    @property
    def joint(self) -> np.ndarray:
        return np.concatenate([self.u, self.p])


@dataclass
class Manifold:
    snapshots: list
    provenance: str = ""
    traj_id: Optional[np.ndarray] = None

    @property
    def parameter_table(self) -> np.ndarray:
        return np.array([s.y.as_vector() for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)

    def velocity_matrix(self) -> np.ndarray:
        return np.column_stack([s.u for s in self.snapshots])

    def pressure_matrix(self) -> np.ndarray:
        return np.column_stack([s.p for s in self.snapshots])

    def joint_matrix(self) -> np.ndarray:
        return np.column_stack([s.joint for s in self.snapshots])

    def select(self, idx) -> "Manifold":
        idx = np.asarray(idx, int)
        tid = None if self.traj_id is None else self.traj_id[idx]
        return Manifold([self.snapshots[i] for i in idx], self.provenance, tid)


# -- inlet data -------------------------------------------------------------------

def inlet_profile_g(t, HR: float, T_sys: float, g_base: float = G_BASE, a_dic: float = G_DICROTIC):
    """Periodic flow waveform: a sin^2 systolic pulse on top of a diastolic baseline.

    The diastolic part carries a small damped bump that returns to ``g_base`` at the
    end of the cycle, so the waveform is continuous and periodic.
    """
    T = 60.0 / HR
    if not 0 < T_sys < T:
        raise DomainError(f"T_sys={T_sys} must lie in (0, {T})")
    th = np.mod(np.asarray(t, float), T)
    sys_part = g_base + (1.0 - g_base) * np.sin(np.pi * th / T_sys) ** 2
    sd = np.clip((th - T_sys) / (T - T_sys), 0.0, 1.0)
    dia_part = g_base + a_dic * np.sin(np.pi * sd) ** 2 * np.exp(-3.0 * sd)
    out = np.where(th < T_sys, sys_part, dia_part)
    return out if out.ndim else float(out)


def _logit_normal(xi, s):
    lg = np.log(xi / (1.0 - xi))
    return np.exp(-0.5 * (lg - s) ** 2) / (xi * (1.0 - xi))


def logit_normal_mode(s: float) -> float:
    """Mode of the 1D logit-normal density, the root of ``logit(x) = s + 2x - 1``."""
    return brentq(lambda x: np.log(x / (1 - x)) - s - (2 * x - 1), 1e-12, 1 - 1e-12)


def inlet_profile_f(xi, s: float):
    """Logit-normal cross-section profile scaled to a unit peak."""
    xi = np.asarray(xi, float)
    if np.any((xi <= 0) | (xi >= 1)) or np.any(~np.isfinite(xi)):
        raise DomainError("xi must lie in the open interval (0, 1)")
    out = _logit_normal(xi, s) / _logit_normal(logit_normal_mode(s), s)
    return out if out.ndim else float(out)


def inlet_velocity(layout, y: FlowParams, t: float) -> np.ndarray:
    """Axial velocity on inlet faces at time ``t``."""
    faces = layout.inlet_faces()
    yc = layout.face_y[faces]
    lo = yc.min() - 0.5 * layout.hy
    hi = yc.max() + 0.5 * layout.hy
    xi = (yc - lo) / (hi - lo)
    return y.u0 * inlet_profile_g(t, y.HR, y.T_sys) * inlet_profile_f(xi, y.s)


# -- Windkessel -------------------------------------------------------------------

def windkessel_step(state: WindkesselState, flux, dt: float, form: str = "consistent"):
    """Explicit Euler step of ``C dp/dt + p/R_d = Q`` and the outlet pressure ``p_d + R_p Q``.

    ``form="literal"`` uses the rate ``1/C_d`` instead of ``1/(R_d C_d)`` (the two agree
    for ``R_d = 1``).

    Returns
    -------
    (WindkesselState, ndarray)
        Updated state and the outlet pressure computed from the updated ``p_d``.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    flux = np.asarray(flux, float)
    C, Rd = np.asarray(state.C_d, float), np.asarray(state.R_d, float)
    tau = C * Rd if form == "consistent" else C
    if form not in ("consistent", "literal"):
        raise ConfigError(f"unknown Windkessel form {form!r}")
    if np.any(dt >= tau):
        raise StabilityError(f"explicit Windkessel update unstable: dt={dt} >= {tau.min():.3g}")
    p_new = state.p_d * (1.0 - dt / tau) + dt / C * flux
    new = replace(state, p_d=p_new)
    return new, p_new + state.R_p * flux


# -- saddle point systems -----------------------------------------------------------

class _Saddle:
    """Partition of velocity dofs into unknowns and Dirichlet values, plus the KKT solve."""

    def __init__(self, layout, unknown: np.ndarray):
        self.L = layout
        self.U = np.flatnonzero(unknown)
        self.Dd = np.flatnonzero(~unknown)
        D = layout.div
        self.DU = D[:, self.U].tocsr()
        self.DD = D[:, self.Dd].tocsr()
        self.DUT = self.DU.T.tocsr()

    def solve(self, K: sp.spmatrix, f_U: np.ndarray, u_D: np.ndarray):
        """Solve ``K u - D^T p = f`` on unknowns with ``D u = 0``; returns (velocity, pressure)."""
        KUU = K[self.U][:, self.U]
        KUD = K[self.U][:, self.Dd]
        rhs = np.concatenate([f_U - KUD @ u_D, self.DD @ u_D])
        M = sp.bmat([[KUU, -self.DUT], [-self.DU, None]], format="csc")
        try:
            x = spla.splu(M, permc_spec="COLAMD").solve(rhs)
        except RuntimeError as exc:  # singular factor
            raise LinSolveError(f"saddle-point solve failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise LinSolveError("saddle-point solve returned non-finite values")
        vel = np.zeros(self.L.n_vel)
        vel[self.U] = x[: len(self.U)]
        vel[self.Dd] = u_D
        return vel, x[len(self.U):]


def _outlet_coupling(layout, R_p) -> sp.csr_matrix:
    n = layout.n_vel
    M = sp.csr_matrix((n, n))
    for k in (0, 1):
        f = layout.outlet_faces(k)
        e = sp.csr_matrix((np.full(len(f), layout.hy), (f, np.zeros(len(f), int))), shape=(n, 1))
        M = M + R_p[k] * (e @ e.T)
    return M.tocsr()


def _outlet_load(layout, pbar) -> np.ndarray:
    f = np.zeros(layout.n_vel)
    for k in (0, 1):
        f[layout.outlet_faces(k)] = layout.hy * pbar[k]
    return f


def _check_cfl(domain, y: FlowParams, dt: float, cfl_max: float) -> None:
    cfl = y.u0 * dt / domain.hx
    if cfl > cfl_max:
        raise StabilityError(f"axial CFL number {cfl:.3f} exceeds {cfl_max}")


def solve_unsteady(y: FlowParams, domain, dt: float = 2e-3, n_cycles: int = 2,
                   n_save: Optional[int] = 25, config: Optional[SolverConfig] = None) -> list:
    """Run ``n_cycles`` heart beats and return snapshots of the last one.

    The step is rounded down so that a cycle holds a whole multiple of ``n_save``
    steps; snapshots are taken at phases ``k T / n_save``, ``k = 0..n_save-1``.
    With ``n_save=None`` every step of the last cycle is kept.
    """
    cfg = config or SolverConfig(dt=dt, n_cycles=n_cycles, n_save=n_save)
    L = domain.layout
    T = y.period
    stride = 1
    if n_save is None:
        n_cyc = int(math.ceil(T / dt))
    else:
        stride = int(math.ceil(T / (dt * n_save)))
        n_cyc = n_save * stride
    dt = T / n_cyc
    _check_cfl(domain, y, dt, cfg.cfl_max)

    rho, mu = y.rho, y.mu
    wk = cfg.windkessel(y.eta)
    saddle = _Saddle(L, L.unknown)
    inlet = L.inlet_faces()
    K0 = sp.diags(rho * L.mass / dt) + mu * L.stiffness
    implicit = cfg.rp_coupling == "implicit"
    if implicit:
        K0 = K0 + _outlet_coupling(L, wk.R_p)
    K0 = K0.tocsr()
    u = np.zeros(L.n_vel)
    u_D = np.zeros(len(saddle.Dd))
    pos_inlet = np.searchsorted(saddle.Dd, inlet)
    flux = L.outlet_flux(u)
    out = []
    n_total = n_cyc * n_cycles
    first_saved = n_cyc * (n_cycles - 1)
    for n in range(n_total):
        t_new = (n + 1) * dt
        wk, pbar_expl = windkessel_step(wk, flux, dt, cfg.windkessel_form)
        u_D[pos_inlet] = inlet_velocity(L, y, t_new)
        K = K0 + rho * L.convection(u)
        load = _outlet_load(L, wk.p_d if implicit else pbar_expl)
        f = (rho * L.mass / dt * u - load)[saddle.U]
        u, p = saddle.solve(K, f, u_D)
        if not np.all(np.isfinite(u)) or np.abs(u).max() > cfg.blowup:
            raise StabilityError(f"velocity blow-up at t={t_new:.4f}")
        flux = L.outlet_flux(u)
        step_in_cycle = n + 1 - first_saved
        if 0 < step_in_cycle <= n_cyc and step_in_cycle % stride == 0:
            pbar = wk.p_d + wk.R_p * flux if implicit else pbar_expl
            out.append(Snapshot(
                u=u.copy(), p=p.copy(),
                y=replace(y, t=(step_in_cycle % n_cyc) * dt),
                cycle_index=n_cycles - 1,
                div_norm=float(np.linalg.norm(L.div @ u)),
                outlet_pressure=pbar.copy(),
            ))
    # the phase-zero sample is the end-of-cycle state
    if n_save is not None:
        out.sort(key=lambda s: s.y.t)
    return out


def solve_steady(domain, u0: float = 5.0, s: float = 0.0, outlet_pressure=(0.0, 0.0),
                 rho: float = 1.0, mu: float = 0.03, tol: float = 1e-11, max_iter: int = 300,
                 stokes: bool = False):
    """Steady Navier-Stokes (Picard iteration) with fixed outlet pressures.

    Inlet velocity is ``u0 f(xi)``. Returns ``(velocity, pressure, n_iterations)``.
    """
    L = domain.layout
    saddle = _Saddle(L, L.unknown)
    inlet = L.inlet_faces()
    u_D = np.zeros(len(saddle.Dd))
    y = FlowParams(u0=u0, s=s)
    yc = L.face_y[inlet]
    lo, hi = yc.min() - 0.5 * L.hy, yc.max() + 0.5 * L.hy
    u_D[np.searchsorted(saddle.Dd, inlet)] = u0 * inlet_profile_f((yc - lo) / (hi - lo), s)
    f = -_outlet_load(L, np.asarray(outlet_pressure, float))[saddle.U]
    A = (mu * L.stiffness).tocsr()
    u, p = saddle.solve(A, f, u_D)
    if stokes:
        return u, p, 0
    for it in range(1, max_iter + 1):
        u_new, p = saddle.solve(A + rho * L.convection(u), f, u_D)
        du = np.linalg.norm(u_new - u) / max(np.linalg.norm(u_new), 1e-300)
        u = u_new
        if du < tol:
            return u, p, it
    raise SolverError(f"Picard iteration did not converge ({du:.2e})", params=y.as_vector())


# -- manifold sampling ------------------------------------------------------------

def draw_parameters(rng: np.random.Generator, count: int, ranges: Optional[dict] = None) -> list:
    r = dict(RANGES, **(ranges or {}))
    out = []
    for _ in range(count):
        d = {k: float(rng.uniform(*r[k])) for k in ("HR", "s", "T_sys", "u0", "eta")}
        out.append(FlowParams(**d))
    return out


def _run_one(args):
    y, domain_cfg, cfg = args
    from .geometry import build_domain
    dom = build_domain(domain_cfg)
    return _solve_tagged(y, dom, cfg)


def _solve_tagged(y, domain, cfg):
    try:
        return solve_unsteady(y, domain, dt=cfg.dt, n_cycles=cfg.n_cycles, n_save=cfg.n_save, config=cfg)
    except NumericalError as exc:
        raise SolverError(f"{exc} (parameters {y.as_vector().tolist()})", params=y.as_vector()) from exc


def provenance_hash(domain, cfg: SolverConfig, seed: int, count: int, ranges=None) -> str:
    blob = json.dumps({"domain": domain.config.to_dict(), "solver": cfg.to_dict(),
                       "seed": seed, "count": count, "ranges": ranges or RANGES}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def sample_manifold(ranges: Optional[dict], count: int, seed: int, domain,
                    config: Optional[SolverConfig] = None, workers: int = 1,
                    progress=None) -> Manifold:
    """Draw ``count`` parameter vectors and keep the last-cycle snapshots of each run."""
    if count < 1:
        raise ConfigError("count must be at least 1")
    cfg = config or SolverConfig()
    rng = np.random.default_rng(seed)
    params = draw_parameters(rng, count, ranges)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_one, [(y, domain.config, cfg) for y in params]))
    else:
        runs = []
        for k, y in enumerate(params):
            runs.append(_solve_tagged(y, domain, cfg))
            if progress is not None:
                progress(k + 1, count)
    snaps, tid = [], []
    for k, r in enumerate(runs):
        snaps.extend(r)
        tid.extend([k] * len(r))
    return Manifold(snaps, provenance_hash(domain, cfg, seed, count, ranges), np.array(tid))


def default_workers() -> int:
    return max(1, min(4, (os.cpu_count() or 1)))
