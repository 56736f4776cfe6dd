"""Periodic 2D grids, manifold-valued fields, stencils and snapshot files.

Node (i, j) sits at x = (i h, j h); axis 0 is x1 and axis 1 is x2.  Field
arrays have the two grid axes first and component axes after them.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, SnapshotFormatError
from .geometry import Hyperboloid


@dataclass(frozen=True)
class Grid2D:
    n: int
    h: float

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")

    @property
    def L(self):
        return self.n * self.h

    @classmethod
    def from_extent(cls, n, L):
        return cls(n, L / n)

    def coords(self):
        """Node coordinates, shape (n, n, 2)."""
        x = np.arange(self.n) * self.h
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return np.stack([X1, X2], axis=-1)

    def relative_coords(self, center):
        """Minimal-image displacement x - center on the torus, shape (n, n, 2)."""
        d = self.coords() - np.asarray(center, dtype=float)
        L = self.L
        return d - L * np.round(d / L)

    def check(self, values):
        if values.shape[:2] != (self.n, self.n):
            raise ShapeMismatch(f"field of shape {values.shape} does not live on an {self.n}x{self.n} grid")

    def refined(self):
        return Grid2D(2 * self.n, self.h / 2)

    def coarsened(self):
        if self.n < 32:
            raise ShapeMismatch("cannot coarsen below n = 16")
        return Grid2D(self.n // 2, self.h * 2)


@dataclass(frozen=True)
class MapField:
    """One wave-time slice: the map phi and its time derivative phi_t."""

    grid: Grid2D
    target: Hyperboloid
    phi: np.ndarray
    phi_t: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.grid.check(self.phi)
        self.grid.check(self.phi_t)
        if self.phi.shape[-1] != self.target.dim or self.phi_t.shape != self.phi.shape:
            raise ShapeMismatch("phi and phi_t must both have shape (n, n, m+1)")

    def with_velocity(self, phi_t):
        return MapField(self.grid, self.target, self.phi, phi_t, self.t)

    def reversed(self):
        return MapField(self.grid, self.target, self.phi, -self.phi_t, self.t)

    def invariant_residuals(self):
        """(max point-constraint violation, max tangency violation)."""
        H = self.target
        pt = np.max(np.abs(H.inner(self.phi, self.phi) + H.r2))
        tg = np.max(np.abs(H.inner(self.phi, self.phi_t)))
        return float(pt), float(tg)


def central_diff(values, axis, h):
    """Second-order centred difference with periodic wrap along grid ``axis``."""
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)


def second_diff(values, axis, h):
    return (np.roll(values, -1, axis=axis) - 2.0 * values + np.roll(values, 1, axis=axis)) / (h * h)


def laplacian(values, h):
    """Five-point Laplacian with periodic wrap."""
    s = (np.roll(values, 1, axis=0) + np.roll(values, -1, axis=0)
         + np.roll(values, 1, axis=1) + np.roll(values, -1, axis=1))
    return (s - 4.0 * values) / (h * h)


def integrate(values, h):
    """h^2 times the node sum (numpy's pairwise reduction over a fixed layout)."""
    a = np.ascontiguousarray(values, dtype=float).reshape(-1)
    return float(np.sum(a) * h * h)


def spatial_derivatives(field_):
    """Tangent-projected centred derivatives (d1 phi, d2 phi), each (n, n, m+1)."""
    H, g = field_.target, field_.grid
    return [H.project_tangent(field_.phi, central_diff(field_.phi, ax, g.h)) for ax in (0, 1)]


def restrict(values):
    """Injection onto every other node."""
    values = np.asarray(values)
    n = values.shape[0]
    if n % 2 or values.shape[1] != n or n // 2 < 16:
        raise ShapeMismatch(f"cannot restrict a field of shape {values.shape}")
    return values[::2, ::2].copy()


def prolong(values):
    """Bilinear periodic prolongation to a grid with twice the nodes per side."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if values.shape[1] != n:
        raise ShapeMismatch(f"cannot prolong a field of shape {values.shape}")
    out = np.empty((2 * n, 2 * n) + values.shape[2:])
    right = np.roll(values, -1, axis=0)
    up = np.roll(values, -1, axis=1)
    diag = np.roll(right, -1, axis=1)
    out[::2, ::2] = values
    out[1::2, ::2] = 0.5 * (values + right)
    out[::2, 1::2] = 0.5 * (values + up)
    out[1::2, 1::2] = 0.25 * (values + right + up + diag)
    return out


def restrict_map(field_):
    g = field_.grid.coarsened()
    return MapField(g, field_.target, restrict(field_.phi), restrict(field_.phi_t), field_.t)


def prolong_map(field_):
    H = field_.target
    phi = H.project_point(prolong(field_.phi))
    phi_t = H.project_tangent(phi, prolong(field_.phi_t))
    return MapField(field_.grid.refined(), H, phi, phi_t, field_.t)


# --- snapshot files ---------------------------------------------------------

MAGIC = b"CWM1"
_HEADER = struct.Struct("<4sIIIIdddd")
HEADER_SIZE = 64


class FieldKind(IntEnum):
    PHI = 1
    PHI_T = 2
    MAPFIELD = 3
    SCALAR = 4
    VECTOR = 5
    SKEW = 6
    FRAME = 7
    STRESS = 8


@dataclass
class Snapshot:
    kind: FieldKind
    n: int
    h: float
    m: int
    kappa: float
    t: float
    values: np.ndarray
    s: float = 0.0
    extra: dict = field(default_factory=dict)


def write_snapshot(path, values, kind, grid, target, t=0.0, s=0.0):
    values = np.ascontiguousarray(values, dtype="<f8")
    grid.check(values)
    ncomp = int(np.prod(values.shape[2:], dtype=int)) if values.ndim > 2 else 1
    header = _HEADER.pack(MAGIC, grid.n, target.m, int(kind), ncomp,
                          grid.h, target.kappa, float(t), float(s))
    header += b"\0" * (HEADER_SIZE - len(header))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes(order="C"))


def read_snapshot(path):
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, n, m, kind, ncomp, h, kappa, t, s = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE)
    if body.size != n * n * ncomp:
        raise SnapshotFormatError(f"{path}: expected {n * n * ncomp} values, found {body.size}")
    kind = FieldKind(kind)
    shape = (n, n) if ncomp == 1 and kind == FieldKind.SCALAR else (n, n, ncomp)
    if kind == FieldKind.SKEW:
        shape = (n, n, m, m)
    elif kind == FieldKind.FRAME:
        shape = (n, n, m, m + 1)
    elif kind == FieldKind.STRESS:
        shape = (n, n, 3, 3)
    return Snapshot(kind, n, h, m, kappa, t, body.reshape(shape).astype(float), s)


def write_mapfield(path, field_, s=0.0):
    both = np.concatenate([field_.phi, field_.phi_t], axis=-1)
    write_snapshot(path, both, FieldKind.MAPFIELD, field_.grid, field_.target, field_.t, s)


def read_mapfield(path):
    snap = read_snapshot(path)
    if snap.kind != FieldKind.MAPFIELD:
        raise SnapshotFormatError(f"{path}: not a map-field snapshot ({snap.kind.name})")
    d = snap.m + 1
    vals = snap.values.reshape(snap.n, snap.n, 2 * d)
    return MapField(Grid2D(snap.n, snap.h), Hyperboloid(snap.m, snap.kappa),
                    vals[..., :d].copy(), vals[..., d:].copy(), snap.t)


def write_csv(path, values, grid, names=None):
    """One node per row: i, j, x, y, then the flattened components."""
    values = np.asarray(values, dtype=float)
    grid.check(values)
    flat = values.reshape(grid.n, grid.n, -1)
    ncomp = flat.shape[-1]
    if names is None:
        names = [f"c{k}" for k in range(ncomp)]
    xs = grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", *names])
        for i in range(grid.n):
            for j in range(grid.n):
                w.writerow([i, j, repr(float(xs[i, j, 0])), repr(float(xs[i, j, 1])),
                            *(repr(float(c)) for c in flat[i, j])])


def read_csv(path, grid):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    out = np.zeros((grid.n, grid.n, data.shape[1] - 4))
    out[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 4:]
    return out
