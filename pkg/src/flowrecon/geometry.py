"""Masked Cartesian channel with a stenosis and a splitter (one inlet, two outlets).

Cells are indexed ``[i, j]`` with ``i`` along x (axial) and ``j`` along y.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ConfigError

LABELS = ("Inlet", "Outlet1", "Outlet2", "Wall")
SIDES = ("W", "E", "S", "N")
_NORMALS = {"W": (-1.0, 0.0), "E": (1.0, 0.0), "S": (0.0, -1.0), "N": (0.0, 1.0)}


@dataclass(frozen=True)
class Splitter:
    x0: float = 0.6
    x1: float = 1.0
    y0: float = 0.45
    y1: float = 0.55


@dataclass(frozen=True)
class Stenosis:
    """Cosine bump attached to the ``side`` wall, depth as a fraction of H."""

    x0: float = 0.2
    x1: float = 0.35
    depth_frac: float = 0.3
    side: str = "top"


@dataclass(frozen=True)
class DomainConfig:
    nx: int = 64
    ny: int = 32
    length_cm: float = 6.0
    height_cm: float = 1.0
    splitter: Optional[Splitter] = field(default_factory=Splitter)
    stenosis: Optional[Stenosis] = field(default_factory=Stenosis)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainConfig":
        d = dict(d)
        sp = d.pop("splitter", {})
        st = d.pop("stenosis", {})
        known = {"nx", "ny", "length_cm", "height_cm"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown domain keys: {sorted(extra)}")
        return cls(
            **d,
            splitter=None if sp is None else Splitter(**sp),
            stenosis=None if st is None else Stenosis(**st),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FaceList:
    """Boundary faces with midpoint, outward normal and length (midpoint quadrature)."""

    cell_i: np.ndarray
    cell_j: np.ndarray
    side: np.ndarray      # one of SIDES
    label: np.ndarray     # one of LABELS
    midpoints: np.ndarray  # (k, 2)
    normals: np.ndarray    # (k, 2)
    lengths: np.ndarray

    def __len__(self) -> int:
        return len(self.cell_i)

    def subset(self, mask) -> "FaceList":
        return FaceList(*(getattr(self, f)[mask] for f in
                          ("cell_i", "cell_j", "side", "label", "midpoints", "normals", "lengths")))

    @property
    def measure(self) -> float:
        return float(self.lengths.sum())


@dataclass(frozen=True, eq=False)
class Domain:
    config: DomainConfig
    nx: int
    ny: int
    hx: float
    hy: float
    active_mask: np.ndarray
    faces: FaceList
    stenosis_params: Optional[Stenosis]
    splitter_rows: Optional[tuple]

    @property
    def h(self) -> tuple:
        return (self.hx, self.hy)

    @property
    def boundary_labels(self) -> np.ndarray:
        return self.faces.label

    @property
    def length(self) -> float:
        return self.config.length_cm

    @property
    def height(self) -> float:
        return self.config.height_cm

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return float(self.active_mask.sum()) * self.cell_area

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Centers of all grid cells as ``(nx, ny)`` arrays."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def layout(self):
        from .mac import MacLayout
        return MacLayout(self)


def _splitter_block(cfg: DomainConfig):
    sp = cfg.splitter
    i0 = int(np.floor(sp.x0 * cfg.nx))
    i1 = int(np.ceil(sp.x1 * cfg.nx))
    j0 = int(np.floor(sp.y0 * cfg.ny))
    j1 = int(np.ceil(sp.y1 * cfg.ny))
    return i0, i1, j0, j1


def _validate(cfg: DomainConfig) -> None:
    if cfg.nx < 8 or cfg.ny < 8:
        raise ConfigError("nx and ny must be at least 8")
    if cfg.length_cm <= 0 or cfg.height_cm <= 0:
        raise ConfigError("channel dimensions must be positive")
    sp = cfg.splitter
    if sp is not None and not (0 <= sp.x0 < sp.x1 <= 1 and 0 < sp.y0 < sp.y1 < 1):
        raise ConfigError(f"splitter rectangle outside the channel: {sp}")
    st = cfg.stenosis
    if st is not None:
        if not (0 < st.x0 < st.x1 < 1 and 0 <= st.depth_frac < 1):
            raise ConfigError(f"stenosis outside the channel: {st}")
        if st.side not in ("top", "bottom"):
            raise ConfigError(f"stenosis side must be 'top' or 'bottom', got {st.side!r}")


def build_domain(config: DomainConfig | dict | None = None) -> Domain:
    """Build the masked channel and label its boundary faces.

    Raises
    ------
    ConfigError
        If the geometry is invalid, disconnected, or an outlet is empty.
    """
    cfg = DomainConfig() if config is None else config
    if isinstance(cfg, dict):
        cfg = DomainConfig.from_dict(cfg)
    _validate(cfg)
    nx, ny = cfg.nx, cfg.ny
    hx, hy = cfg.length_cm / nx, cfg.height_cm / ny
    active = np.ones((nx, ny), dtype=bool)

    st = cfg.stenosis
    if st is not None and st.depth_frac > 0:
        xc = (np.arange(nx) + 0.5) / nx
        inside = (xc >= st.x0) & (xc <= st.x1)
        depth = np.zeros(nx)
        depth[inside] = st.depth_frac * np.sin(np.pi * (xc[inside] - st.x0) / (st.x1 - st.x0)) ** 2
        nblock = np.rint(depth * ny).astype(int)
        for i in np.flatnonzero(nblock):
            if st.side == "top":
                active[i, ny - nblock[i]:] = False
            else:
                active[i, :nblock[i]] = False

    rows = None
    if cfg.splitter is not None:
        i0, i1, j0, j1 = _splitter_block(cfg)
        active[i0:i1, j0:j1] = False
        rows = (j0, j1)

    _, ncomp = ndimage.label(active)
    if ncomp != 1:
        raise ConfigError(f"active region has {ncomp} connected components")

    faces = _boundary_faces(active, hx, hy, rows)
    for lab in ("Inlet", "Outlet1", "Outlet2"):
        sel = faces.label == lab
        if not sel.any():
            raise ConfigError(f"boundary label {lab} is empty")
        js = np.sort(faces.cell_j[sel])
        if np.any(np.diff(js) != 1):
            raise ConfigError(f"boundary segment {lab} is not connected")
    return Domain(cfg, nx, ny, hx, hy, active, faces, st, rows)


def _boundary_faces(active: np.ndarray, hx: float, hy: float, rows) -> FaceList:
    nx, ny = active.shape
    pad = np.pad(active, 1, constant_values=False)
    ci, cj, side, lab, mid, nrm, length = [], [], [], [], [], [], []
    split_mid = None if rows is None else 0.5 * (rows[0] + rows[1])
    offsets = {"W": (-1, 0), "E": (1, 0), "S": (0, -1), "N": (0, 1)}
    for s in SIDES:
        di, dj = offsets[s]
        nb = pad[1 + di:1 + di + nx, 1 + dj:1 + dj + ny]
        ii, jj = np.nonzero(active & ~nb)
        for i, j in zip(ii, jj):
            if s == "W" and i == 0:
                label = "Inlet"
            elif s == "E" and i == nx - 1:
                label = "Outlet2" if (split_mid is not None and j < split_mid) else "Outlet1"
            else:
                label = "Wall"
            xm = (i + 0.5 + 0.5 * di) * hx
            ym = (j + 0.5 + 0.5 * dj) * hy
            ci.append(i); cj.append(j); side.append(s); lab.append(label)
            mid.append((xm, ym)); nrm.append(_NORMALS[s])
            length.append(hy if s in "WE" else hx)
    ci, cj = np.array(ci), np.array(cj)
    side, lab = np.array(side), np.array(lab)
    order = np.lexsort((ci, cj, [SIDES.index(x) for x in side], [LABELS.index(x) for x in lab]))
    return FaceList(ci[order], cj[order], side[order], lab[order],
                    np.array(mid)[order], np.array(nrm)[order], np.array(length)[order])


def boundary_faces(domain: Domain, label: str) -> FaceList:
    """Ordered faces carrying ``label`` (sorted along the boundary)."""
    if label not in LABELS:
        raise ConfigError(f"unknown boundary label {label!r}")
    return domain.faces.subset(domain.faces.label == label)


def perimeter_face_count(active: np.ndarray) -> int:
    pad = np.pad(active, 1, constant_values=False).astype(int)
    return int(np.abs(np.diff(pad, axis=0)).sum() + np.abs(np.diff(pad, axis=1)).sum())
