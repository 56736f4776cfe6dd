"""Stress-energy tensor at s = 0 and the backward light-cone machinery.

Times on a cone are measured relative to its apex, so the cone occupies
tau = t - t_apex < 0 and |x - x_apex| <= |tau|.  Spacetime indices run over
(t, x1, x2) with metric diag(-1, 1, 1).  Disk integrals weight every node by
the exact area of its cell inside the disk; circle integrals sample the
circle at equally spaced angles and interpolate bilinearly.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConeOutsideBox, GridMismatch, SingularField
from .gauge import GaugeFieldSet, frame_components
from .grid import Grid2D, MapField, central_diff, spatial_derivatives

G = np.diag([-1.0, 1.0, 1.0])
ANGLES_PER_CELL = 8


# --- the tensor --------------------------------------------------------------

def derivative_fields(state: MapField):
    """psi_alpha, alpha in (t, x1, x2), in the pulled-back coordinate frame: (3, n, n, m).

    Any orthonormal frame gives the same tensor; this one needs no heat flow.
    """
    H = state.target
    frame = H.frame_at(state.phi)
    d1, d2 = spatial_derivatives(state)
    return np.stack([frame_components(frame, v) for v in (state.phi_t, d1, d2)])


def stress_tensor(psi):
    """T_ab = <psi_a, psi_b> - 1/2 g_ab <psi^c, psi_c> for psi of shape (3, ..., m).

    Accepts a GaugeFieldSet (its s = 0 level is used).  Returns (..., 3, 3).
    """
    if isinstance(psi, GaugeFieldSet):
        psi = psi.psi[0]
    psi = np.asarray(psi, dtype=float)
    gram = np.einsum("a...i,b...i->...ab", psi, psi)
    lag = -gram[..., 0, 0] + gram[..., 1, 1] + gram[..., 2, 2]
    return gram - 0.5 * G * lag[..., None, None]


def trace(T):
    """g^{ab} T_ab."""
    return -T[..., 0, 0] + T[..., 1, 1] + T[..., 2, 2]


@dataclass
class StressEnergyField:
    grid: Grid2D
    t: float
    T: np.ndarray        # (n, n, 3, 3)
    psi: np.ndarray      # (3, n, n, m)

    @classmethod
    def from_state(cls, state: MapField):
        psi = derivative_fields(state)
        return cls(state.grid, float(state.t), stress_tensor(psi), psi)

    def energy(self):
        return float(np.sum(self.T[..., 0, 0]) * self.grid.h ** 2)


def stress_series(traj):
    return [StressEnergyField.from_state(s) for s in traj.states]


def _spacing(fields):
    t = np.array([f.t for f in fields])
    dts = np.diff(t)
    if len(dts) == 0 or np.any(np.abs(dts - dts[0]) > 1e-9 * abs(dts[0])):
        raise GridMismatch("slices must be equally spaced in time")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise GridMismatch("slices live on different grids")
    return float(dts[0]), grid


def divergence_residual(fields):
    """d^a T_ab = -d_t T_0b + d_j T_jb at every interior slice, centred: (S-2, n, n, 3)."""
    if len(fields) < 3:
        raise GridMismatch("the divergence needs at least three consecutive slices")
    dt, grid = _spacing(fields)
    T = np.array([f.T for f in fields])
    div = -(T[2:, ..., 0, :] - T[:-2, ..., 0, :]) / (2.0 * dt)
    for j in (1, 2):
        div = div + central_diff(T[1:-1, ..., j, :], j, grid.h)
    return div


# --- disks and circles -------------------------------------------------------

def _quadrant_area(x, y, R):
    """Area of {0 <= u <= x, 0 <= v <= y, u^2 + v^2 <= R^2} for x, y >= 0."""
    x = np.minimum(x, R)
    y = np.minimum(y, R)
    u0 = np.minimum(np.sqrt(np.maximum(R * R - y * y, 0.0)), x)

    def prim(u):
        return 0.5 * (u * np.sqrt(np.maximum(R * R - u * u, 0.0)) + R * R * np.arcsin(u / R))

    return y * u0 + prim(x) - prim(u0)


def _signed_area(x, y, R):
    return np.sign(x) * np.sign(y) * _quadrant_area(np.abs(x), np.abs(y), R)


def disk_weights(grid: Grid2D, center, R):
    """Fraction of each node's cell lying in the disk |x - center| <= R: (n, n)."""
    if R <= 0:
        return np.zeros((grid.n, grid.n))
    d = grid.relative_coords(center)
    h2 = 0.5 * grid.h
    x0, x1 = d[..., 0] - h2, d[..., 0] + h2
    y0, y1 = d[..., 1] - h2, d[..., 1] + h2
    area = (_signed_area(x1, y1, R) - _signed_area(x0, y1, R)
            - _signed_area(x1, y0, R) + _signed_area(x0, y0, R))
    # cells whose nearest point lies outside the disk get exactly zero
    near = np.maximum(np.abs(d) - h2, 0.0)
    area = np.where(np.sum(near * near, axis=-1) < R * R, area, 0.0)
    return np.clip(area / grid.h ** 2, 0.0, 1.0)


def interpolate(values, grid: Grid2D, points):
    """Periodic bilinear interpolation of node values (n, n, ...) at points (P, 2)."""
    u = np.asarray(points, dtype=float) / grid.h
    i0 = np.floor(u).astype(np.int64)
    f = u - i0
    n = grid.n
    i, j = i0[:, 0] % n, i0[:, 1] % n
    ip, jp = (i + 1) % n, (j + 1) % n
    shape = (-1,) + (1,) * (values.ndim - 2)
    fx, fy = f[:, 0].reshape(shape), f[:, 1].reshape(shape)
    return ((1 - fx) * (1 - fy) * values[i, j] + fx * (1 - fy) * values[ip, j]
            + (1 - fx) * fy * values[i, jp] + fx * fy * values[ip, jp])


def circle_samples(grid: Grid2D, center, R):
    """(points, unit normals, arclength weight per sample) on |x - center| = R."""
    M = max(16, int(math.ceil(ANGLES_PER_CELL * 2 * math.pi * R / grid.h)))
    th = 2 * math.pi * np.arange(M) / M
    om = np.stack([np.cos(th), np.sin(th)], axis=-1)
    return np.asarray(center, dtype=float) + R * om, om, 2 * math.pi * R / M


# --- cone geometry -----------------------------------------------------------

def _smootherstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10 - 15 * u + 6 * u * u)


def _smootherstep_d(u, order):
    inside = (u > 0) & (u < 1)
    uc = np.clip(u, 0.0, 1.0)
    if order == 1:
        return np.where(inside, 30 * uc ** 2 * (1 - uc) ** 2, 0.0)
    return np.where(inside, 60 * uc * (1 - uc) * (1 - 2 * uc), 0.0)


@dataclass(frozen=True)
class ConeGeometry:
    """Backward cone with apex (apex_t, apex_x) and the slab tau in [t2, t1], t2 = lam t1 < t1 < 0.

    ``eps`` shifts the origin of the mollified coordinates to tau = -eps t1
    (upwards, since t1 < 0).
    """

    apex_t: float
    apex_x: tuple
    t1: float
    lam: float = 8.0
    eps: float = 1.0

    def __post_init__(self):
        if not self.t1 < 0:
            raise ValueError(f"t1 must be negative (before the apex), got {self.t1}")
        if not self.lam > 4:
            raise ValueError(f"lambda must exceed 4, got {self.lam}")
        if not 0 < self.eps <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.eps}")

    @property
    def t2(self):
        return self.lam * self.t1

    def tau(self, t):
        return t - self.apex_t

    def radius(self, t):
        return abs(self.tau(t))

    def check_inside(self, grid: Grid2D, tau_min=None):
        R = abs(self.t2 if tau_min is None else tau_min)
        if R + 2 * grid.h > 0.5 * grid.L:
            raise ConeOutsideBox(f"cone radius {R:g} does not fit in the periodic box of side {grid.L:g}")

    def eta(self, tau, order=0):
        """Time cutoff: 1 on [t2/2, 2 t1], 0 outside [t2, t1], smootherstep ramps."""
        tau = np.asarray(tau, dtype=float)
        a, b = self.t2, 0.5 * self.t2
        c, d = 2.0 * self.t1, self.t1
        ua = (tau - a) / (b - a)
        ud = (d - tau) / (d - c)
        if order == 0:
            return np.where(tau < 0.5 * (b + c), _smootherstep(ua), _smootherstep(ud))
        da = _smootherstep_d(ua, order) / (b - a) ** order
        dd = _smootherstep_d(ud, order) * (-1.0 / (d - c)) ** order
        return np.where(tau < 0.5 * (b + c), da, dd)

    def eta_dd_bound(self):
        """sup |eta''|: the smootherstep second derivative peaks at 10/sqrt(3) per unit ramp."""
        peak = 10.0 / math.sqrt(3.0)
        return peak * max(1.0 / (0.5 * self.t2) ** 2, 1.0 / self.t1 ** 2)


# --- vector fields -----------------------------------------------------------

class TimeTranslation:
    """X = d_t; its derivative vanishes."""

    name = "d_t"

    def values(self, cone, tau, x):
        X = np.zeros(x.shape[:-1] + (3,))
        X[..., 0] = 1.0
        return X

    def gradient(self, cone, tau, x):
        return np.zeros(x.shape[:-1] + (3, 3))


class MollifiedScaling:
    """X^b = eta x~^b / rho~ + (d^b eta) rho~ with x~^0 = tau + eps t1, x~^j = x^j."""

    name = "mollified_scaling"

    def _coords(self, cone, tau, x):
        x0 = tau + cone.eps * cone.t1
        rho2 = x0 * x0 - np.sum(x * x, axis=-1)
        if np.any(rho2 <= 0):
            raise SingularField("rho~ vanishes or is imaginary at an evaluation point")
        xt = np.concatenate([np.broadcast_to(x0, x.shape[:-1])[..., None], x], axis=-1)
        return xt, np.sqrt(rho2)

    def values(self, cone, tau, x):
        xt, rho = self._coords(cone, tau, x)
        X = cone.eta(tau) * xt / rho[..., None]
        X[..., 0] += -cone.eta(tau, 1) * rho
        return X

    def gradient(self, cone, tau, x):
        """d^a X^b (upper indices), the full non-symmetric matrix."""
        xt, rho = self._coords(cone, tau, x)
        eta, d1, d2 = (cone.eta(tau, k) for k in (0, 1, 2))
        up_eta = np.zeros(3)
        up_eta[0] = -d1                                       # d^0 eta = -eta'
        r = rho[..., None, None]
        out = eta * (G / r + xt[..., :, None] * xt[..., None, :] / r ** 3)
        out = out + (up_eta[:, None] * xt[..., None, :] - xt[..., :, None] * up_eta[None, :]) / r
        out[..., 0, 0] += d2 * rho
        return out

    def split_terms(self, cone, tau, x, psi):
        """(eta |x~^a psi_a|^2 / rho~^3, rho~ T_00 eta'') at each node; psi (3, ..., m)."""
        xt, rho = self._coords(cone, tau, x)
        contracted = np.einsum("...a,a...i->...i", xt, psi)
        T00 = stress_tensor(psi)[..., 0, 0]
        pos = cone.eta(tau) * np.sum(contracted ** 2, axis=-1) / rho ** 3
        return pos, rho * T00 * cone.eta(tau, 2)


VECTOR_FIELDS = {"d_t": TimeTranslation, "mollified_scaling": MollifiedScaling}


# --- integrals over the cone -------------------------------------------------

def _slab(fields, cone, tau_lo, tau_hi):
    """Indices of the slices with tau in [tau_lo, tau_hi]; both ends must be slice times."""
    dt, grid = _spacing(fields)
    taus = np.array([cone.tau(f.t) for f in fields])
    idx = []
    for target in (tau_lo, tau_hi):
        k = int(np.argmin(np.abs(taus - target)))
        if abs(taus[k] - target) > 1e-9 * dt:
            raise GridMismatch(f"no slice at tau = {target:g} (nearest {taus[k]:g})")
        idx.append(k)
    lo, hi = idx
    return list(range(lo, hi + 1)), dt, grid


def _trapezoid_weights(k, dt):
    w = np.full(k, dt)
    if k:
        w[0] = w[-1] = 0.5 * dt
    if k == 1:
        w[0] = 0.0
    return w


def cone_energy(field_: StressEnergyField, cone: ConeGeometry):
    """Energy of the disk |x - x*| <= |tau| at the slice's time."""
    cone.check_inside(field_.grid, cone.tau(field_.t))
    w = disk_weights(field_.grid, cone.apex_x, cone.radius(field_.t))
    return float(np.sum(w * field_.T[..., 0, 0]) * field_.grid.h ** 2)


def _mantle_samples(field_: StressEnergyField, cone):
    R = cone.radius(field_.t)
    pts, om, dl = circle_samples(field_.grid, cone.apex_x, R)
    T = interpolate(field_.T, field_.grid, pts)
    return pts - np.asarray(cone.apex_x, dtype=float), om, dl, T


def _T_L(T, om):
    """T_{L b} = T_0b - omega_j T_jb at each sample: (P, 3)."""
    return T[:, 0, :] - om[:, 0, None] * T[:, 1, :] - om[:, 1, None] * T[:, 2, :]


def flux_integral(fields, cone: ConeGeometry, tau2, tau1):
    """Integral of T_L0 over the mantle between tau2 < tau1 with the artificial measure.

    Returns (flux, per-slice circle integrals).
    """
    idx, dt, grid = _slab(fields, cone, tau2, tau1)
    cone.check_inside(grid, tau2)
    w = _trapezoid_weights(len(idx), dt)
    circ = np.array([float(np.sum(_T_L(T, om)[:, 0]) * dl)
                     for _, om, dl, T in (_mantle_samples(fields[k], cone) for k in idx)])
    return float(np.sum(w * circ)), circ


@dataclass
class EnergyIdentity:
    E_t2: float
    E_t1: float
    flux: float
    defect: float
    energies: list
    monotonicity_violation: float

    def as_dict(self):
        return asdict(self)


def energy_identity(fields, cone: ConeGeometry, tau2=None, tau1=None):
    """E(t1) + flux - E(t2) over the slab, plus the worst increase of E toward the apex."""
    tau2 = cone.t2 if tau2 is None else tau2
    tau1 = cone.t1 if tau1 is None else tau1
    idx, _, _ = _slab(fields, cone, tau2, tau1)
    flux, _ = flux_integral(fields, cone, tau2, tau1)
    E = [cone_energy(fields[k], cone) for k in idx]
    rise = max([0.0] + [b - a for a, b in zip(E[:-1], E[1:])])
    return EnergyIdentity(E[0], E[-1], flux, E[-1] + flux - E[0], E, rise)


def tl0_decomposition(field_: StressEnergyField, cone: ConeGeometry):
    """T_L0 from interpolated T against 1/2 |psi_L|^2 + 1/2 |psi_angular|^2 from interpolated psi.

    Returns (T_L0 samples, sup defect).
    """
    rel, om, _, T = _mantle_samples(field_, cone)
    tl0 = _T_L(T, om)[:, 0]
    psi = interpolate(np.moveaxis(field_.psi, 0, 2), field_.grid, rel + np.asarray(cone.apex_x))
    psi_L = psi[:, 0] - om[:, 0, None] * psi[:, 1] - om[:, 1, None] * psi[:, 2]
    psi_ang = om[:, 0, None] * psi[:, 2] - om[:, 1, None] * psi[:, 1]
    squares = 0.5 * np.sum(psi_L ** 2, axis=-1) + 0.5 * np.sum(psi_ang ** 2, axis=-1)
    return tl0, float(np.max(np.abs(tl0 - squares))) if len(tl0) else 0.0


@dataclass
class StokesReport:
    field: str
    bulk: float          # integral of T_ab d^a X^b over the truncated cone
    disk_t1: float
    disk_t2: float
    mantle: float
    defect: float        # disk_t1 + mantle - disk_t2 + bulk
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def _disk_term(f, cone, X):
    grid = f.grid
    tau = cone.tau(f.t)
    w = disk_weights(grid, cone.apex_x, abs(tau))
    mask = w > 0
    x = grid.relative_coords(cone.apex_x)[mask]
    val = np.einsum("pb,pb->p", f.T[mask][:, 0, :], X.values(cone, tau, x))
    return float(np.sum(w[mask] * val) * grid.h ** 2)


def stokes_check(fields, X, cone: ConeGeometry, tau2=None, tau1=None) -> StokesReport:
    """Both sides of the Stokes identity for T and the vector field ``X`` on the slab."""
    tau2 = cone.t2 if tau2 is None else tau2
    tau1 = cone.t1 if tau1 is None else tau1
    idx, dt, grid = _slab(fields, cone, tau2, tau1)
    cone.check_inside(grid, tau2)
    wt = _trapezoid_weights(len(idx), dt)
    bulk = mantle = 0.0
    pos_total = cut_total = 0.0
    split_gap = 0.0
    for wk, k in zip(wt, idx):
        f = fields[k]
        tau = cone.tau(f.t)
        w = disk_weights(grid, cone.apex_x, abs(tau))
        mask = w > 0
        x = grid.relative_coords(cone.apex_x)[mask]
        if mask.any():
            dX = X.gradient(cone, tau, x)
            integrand = np.einsum("pab,pab->p", f.T[mask], dX)
            bulk += wk * float(np.sum(w[mask] * integrand)) * grid.h ** 2
            if isinstance(X, MollifiedScaling):
                pos, cut = X.split_terms(cone, tau, x, f.psi[:, mask])
                pos_total += wk * float(np.sum(w[mask] * pos)) * grid.h ** 2
                cut_total += wk * float(np.sum(w[mask] * cut)) * grid.h ** 2
                scale = max(1.0, float(np.max(np.abs(integrand))))
                split_gap = max(split_gap, float(np.max(np.abs(integrand - pos - cut))) / scale)
        rel, om, dl, T = _mantle_samples(f, cone)
        if len(rel):
            val = np.einsum("pb,pb->p", _T_L(T, om), X.values(cone, tau, rel))
            mantle += wk * float(np.sum(val)) * dl
    d1 = _disk_term(fields[idx[-1]], cone, X)
    d2 = _disk_term(fields[idx[0]], cone, X)
    extra = {}
    if isinstance(X, MollifiedScaling):
        extra = {"positive_part": pos_total, "cutoff_part": cut_total,
                 "split_defect": split_gap, "eta_dd_bound": cone.eta_dd_bound()}
    return StokesReport(X.name, bulk, d1, d2, mantle, d1 + mantle - d2 + bulk, extra)


# --- self-similarity ---------------------------------------------------------

def scaling_component(psi, x, tau):
    """(1/t) psi_S = psi_0 + (x_j / t) psi_j, with t the time relative to the apex."""
    return psi[0] + (x[..., 0, None] * psi[1] + x[..., 1, None] * psi[2]) / tau


def selfsimilar_integrand(field_: StressEnergyField, cone: ConeGeometry):
    """Per node |(1/t) psi_S|^2 and the disk weights, at the slice's time."""
    grid = field_.grid
    tau = cone.tau(field_.t)
    x = grid.relative_coords(cone.apex_x)
    q = np.sum(scaling_component(field_.psi, x, tau) ** 2, axis=-1)
    return q, disk_weights(grid, cone.apex_x, abs(tau))


@dataclass
class SelfSimilarReport:
    value: float
    T_lo: float
    T_hi: float
    blocks: list          # [(tau_a, tau_b, integral)] over dyadic blocks
    series: list          # per slice: (tau, cone integral / |tau|)

    def as_dict(self):
        return asdict(self)


def selfsimilar_functional(fields, cone: ConeGeometry, T_lo, T_hi) -> SelfSimilarReport:
    """(1 / |log(T_hi/T_lo)|) * integral over T_lo <= tau <= T_hi of the cone integral of
    |(1/t) psi_S|^2 against dt / |t|, trapezoid in time; T_lo < T_hi < 0."""
    if not T_lo < T_hi < 0:
        raise ValueError("need T_lo < T_hi < 0")
    idx, dt, grid = _slab(fields, cone, T_lo, T_hi)
    cone.check_inside(grid, T_lo)
    taus = np.array([cone.tau(fields[k].t) for k in idx])
    per = []
    for k, tau in zip(idx, taus):
        q, w = selfsimilar_integrand(fields[k], cone)
        per.append(float(np.sum(w * q)) * grid.h ** 2 / abs(tau))
    per = np.array(per)
    wt = _trapezoid_weights(len(idx), dt)
    value = float(np.sum(wt * per)) / abs(math.log(T_hi / T_lo))
    blocks = []
    a = T_lo
    while a < T_hi - 1e-12 * abs(T_lo):
        b = min(0.5 * a, T_hi)
        sel = (taus >= a - 1e-9 * dt) & (taus <= b + 1e-9 * dt)
        blocks.append((float(a), float(b), float(np.trapezoid(per[sel], taus[sel])) if sel.sum() > 1 else 0.0))
        a = b
    return SelfSimilarReport(value, float(T_lo), float(T_hi), blocks,
                             [(float(t), float(p)) for t, p in zip(taus, per)])
