"""Discrete residuals of the structural identities satisfied by the caloric fields.

Covariant derivatives are D_a = d_a + A_a with centred differences in x,
centred differences between neighbouring ladders in t, and the three-point
non-uniform formula between ladder levels in s.  The Minkowski metric has
signature (-, +, +): raising the t index flips its sign.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import GridMismatch
from .gauge import GaugeFieldSet
from .grid import central_diff, second_diff

ETA = np.array([-1.0, 1.0, 1.0])
NAMES = ("t", "x1", "x2")


@dataclass
class Residual:
    name: str
    sup: float
    l2: float
    scale: float = 0.0

    def as_dict(self):
        return asdict(self)


def residual(name, field_, h, scale=0.0):
    """sup of |entries| and the h^2-weighted L2 norm of a field."""
    a = np.asarray(field_, dtype=float)
    if a.size == 0:
        return Residual(name, 0.0, 0.0, float(scale))
    return Residual(name, float(np.max(np.abs(a))), float(np.sqrt(np.sum(a * a) * h * h)),
                    float(scale))


def matvec(A, v):
    return np.einsum("...ij,...j->...i", A, v)


def dot(u, v):
    return np.sum(u * v, axis=-1)


def wedge_apply(a, b, v):
    """(a ^ b) v = a <b, v> - b <a, v>."""
    return a * dot(b, v)[..., None] - b * dot(a, v)[..., None]


def wedge(a, b):
    return a[..., :, None] * b[..., None, :] - b[..., :, None] * a[..., None, :]


def commutator(X, Y):
    return X @ Y - Y @ X


def d_space(f, k, h):
    """Centred d_k (k = 1, 2) of a field with grid axes first."""
    return central_diff(f, k - 1, h)


def cov_space(f, A, k, h):
    """D_k f for an R^m-valued field f at one level."""
    return d_space(f, k, h) + matvec(A[k], f)


def cov_laplacian(f, A, h):
    """sum_k D_k D_k f (nested centred differences)."""
    out = 0.0
    for k in (1, 2):
        g = cov_space(f, A, k, h)
        out = out + d_space(g, k, h) + matvec(A[k], g)
    return out


def s_weights(s, k):
    """Non-uniform three-point weights for d/ds at interior level k."""
    h1 = s[k] - s[k - 1]
    h2 = s[k + 1] - s[k]
    return (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))


def d_s(arr, s, k):
    """d/ds at interior level k of a per-level sequence ``arr``."""
    w = s_weights(s, k)
    return w[0] * arr[k - 1] + w[1] * arr[k] + w[2] * arr[k + 1]


def d_s_window(window, s, k):
    """d/ds at level k from the three values at levels k-1, k, k+1."""
    w = s_weights(s, k)
    return w[0] * window[0] + w[1] * window[1] + w[2] * window[2]


def _pairs(fs):
    return [(1, 2)] + ([(0, 1), (0, 2)] if fs.has_time else [])


def _d_alpha(fs, name, k, alpha, comp):
    """d_alpha of field ``name`` component ``comp`` (spacetime index) at level k."""
    arr = getattr(fs, name)[k]
    if alpha == 0:
        return fs.t_derivative(name, k)[comp]
    return d_space(arr[comp], alpha, fs.h)


def torsion_fields(fs: GaugeFieldSet, k=0):
    """D_a psi_b - D_b psi_a for each available pair (a, b)."""
    psi, A = fs.psi[k], fs.A[k]
    out = {}
    for a, b in _pairs(fs):
        out[(a, b)] = (_d_alpha(fs, "psi", k, a, b) - _d_alpha(fs, "psi", k, b, a)
                       + matvec(A[a], psi[b]) - matvec(A[b], psi[a]))
    return out


def torsion_residual(fs: GaugeFieldSet, k=0):
    scale = float(np.max(np.abs(fs.psi[k]))) if fs.psi[k].size else 0.0
    return {f"torsion_{NAMES[a]}{NAMES[b]}": residual(f"torsion_{NAMES[a]}{NAMES[b]}", r, fs.h, scale)
            for (a, b), r in torsion_fields(fs, k).items()}


def curvature_fields(fs: GaugeFieldSet, k=0):
    """(F_ab, kappa psi_a ^ psi_b, [A_a, A_b]) for each available pair."""
    psi, A = fs.psi[k], fs.A[k]
    out = {}
    for a, b in _pairs(fs):
        comm = commutator(A[a], A[b])
        F = _d_alpha(fs, "A", k, a, b) - _d_alpha(fs, "A", k, b, a) + comm
        out[(a, b)] = (F, fs.kappa * wedge(psi[a], psi[b]), comm)
    return out


def curvature_residual(fs: GaugeFieldSet, k=0):
    res = {}
    for (a, b), (F, rhs, comm) in curvature_fields(fs, k).items():
        tag = f"{NAMES[a]}{NAMES[b]}"
        res[f"curvature_{tag}"] = residual(f"curvature_{tag}", F - rhs, fs.h, float(np.max(np.abs(rhs))))
        res[f"commutator_{tag}"] = residual(f"commutator_{tag}", comm, fs.h)
    return res


def curvature_norm(fs: GaugeFieldSet, k=0):
    """Pointwise Frobenius norm |F_ab| for each available pair, (n, n) arrays."""
    return {(a, b): np.sqrt(np.sum(F ** 2, axis=(-1, -2)))
            for (a, b), (F, _, _) in curvature_fields(fs, k).items()}


def heat_tension(fs: GaugeFieldSet, k=0):
    """D_k psi_k at level k."""
    psi, A = fs.psi[k], fs.A[k]
    return sum(cov_space(psi[j], A, j, fs.h) for j in (1, 2))


def wave_tension(fs: GaugeFieldSet, k=0):
    """u = D^alpha psi_alpha = -D_t psi_t + D_k psi_k (needs neighbouring ladders)."""
    psi, A = fs.psi[k], fs.A[k]
    dt_psi_t = fs.t_derivative("psi", k)[0] + matvec(A[0], psi[0])
    return -dt_psi_t + heat_tension(fs, k)


def tension_fields(fs: GaugeFieldSet, k=0):
    """(psi_s - D_k psi_k, u) at level k; u is None without neighbouring ladders."""
    check = fs.psi_s[k] - heat_tension(fs, k)
    u = wave_tension(fs, k) if fs.has_time else None
    return check, u


def tension_residuals(fs: GaugeFieldSet, k=0):
    check, u = tension_fields(fs, k)
    out = {"heat_tension": residual("heat_tension", check, fs.h, float(np.max(np.abs(fs.psi_s[k]))))}
    if u is not None:
        out["wave_tension"] = residual("wave_tension", u, fs.h)
    return out


def _interior(fs):
    if fs.K < 2:
        return range(0)
    return range(1, fs.K)


def heat_equation_defects(fs: GaugeFieldSet, k):
    """Defects of d_s psi_a and d_s psi_s against their covariant heat equations at level k."""
    s, h, kap = fs.s_levels, fs.h, fs.kappa
    psi, A = fs.psi[k], fs.A[k]
    out = {}
    for a in range(3):
        rhs = cov_laplacian(psi[a], A, h)
        for j in (1, 2):
            rhs = rhs + kap * wedge_apply(psi[a], psi[j], psi[j])
        out[f"psi_{NAMES[a]}"] = d_s(fs.psi[:, a], s, k) - rhs
    rhs = cov_laplacian(fs.psi_s[k], A, h)
    for j in (1, 2):
        rhs = rhs + kap * wedge_apply(fs.psi_s[k], psi[j], psi[j])
    out["psi_s"] = d_s(fs.psi_s, s, k) - rhs
    return out


def u_heat_defect(fs: GaugeFieldSet, k, u_all):
    """d_s u - [D_k D_k u + kappa (u ^ psi_k) psi_k + 4 kappa (psi_a ^ psi_k) D_k psi^a]."""
    s, h, kap = fs.s_levels, fs.h, fs.kappa
    du = d_s(u_all, s, k)
    u = u_all[k]
    psi, A = fs.psi[k], fs.A[k]
    rhs = cov_laplacian(u, A, h)
    for j in (1, 2):
        rhs = rhs + kap * wedge_apply(u, psi[j], psi[j])
        for a in range(3):
            rhs = rhs + 4.0 * kap * ETA[a] * wedge_apply(psi[a], psi[j], cov_space(psi[a], A, j, h))
    return du - rhs


def psis_wave_defect(fs: GaugeFieldSet, k, u_all):
    """box psi_s - [d_s u - d_s(A^a psi_a) - d^a(A_a psi_s)] at interior level k."""
    if not fs.has_time:
        raise GridMismatch("the psi_s wave equation needs ladders at three adjacent times")
    s, h, dt = fs.s_levels, fs.h, fs.dt
    mi, pl = fs.neighbours
    ps = fs.psi_s
    box = -(pl.psi_s[k] - 2.0 * ps[k] + mi.psi_s[k]) / dt ** 2
    box = box + second_diff(ps[k], 0, h) + second_diff(ps[k], 1, h)
    Apsi = np.array([sum(ETA[a] * matvec(fs.A[j][a], fs.psi[j][a]) for a in range(3))
                     for j in range(k - 1, k + 2)])
    d_Apsi = d_s_window(Apsi, s, k)
    div = -(matvec(pl.A[k][0], pl.psi_s[k]) - matvec(mi.A[k][0], mi.psi_s[k])) / (2.0 * dt)
    for j in (1, 2):
        div = div + d_space(matvec(fs.A[k][j], ps[k]), j, h)
    return box - (d_s(u_all, s, k) - d_Apsi - div)


def evolution_residuals(fs: GaugeFieldSet, levels=None):
    """Residuals of the s-heat equations (and, with neighbours, the u-heat and psi_s-wave
    equations) over interior ladder levels; sup/L2 are maxima over levels."""
    levels = list(_interior(fs) if levels is None else levels)
    acc = {}
    u_all = None
    if fs.has_time:
        u_all = np.array([wave_tension(fs, j) for j in range(fs.K + 1)])
    for k in levels:
        items = heat_equation_defects(fs, k)
        if u_all is not None:
            items["u_heat"] = u_heat_defect(fs, k, u_all)
            items["psi_s_wave"] = psis_wave_defect(fs, k, u_all)
        for name, r in items.items():
            acc.setdefault(name, []).append(residual(name, r, fs.h))
    return {name: Residual(name, max(r.sup for r in rs), max(r.l2 for r in rs))
            for name, rs in acc.items()}


def s_torsion_residual(fs: GaugeFieldSet, levels=None):
    """d_s psi_a - D_a psi_s (the zero-torsion identity with A_s = 0), for a = x1, x2."""
    levels = list(_interior(fs) if levels is None else levels)
    worst = Residual("torsion_s", 0.0, 0.0)
    for k in levels:
        A = fs.A[k]
        for a in (1, 2):
            r = d_s(fs.psi[:, a], fs.s_levels, k) - cov_space(fs.psi_s[k], A, a, fs.h)
            rr = residual("torsion_s", r, fs.h)
            worst = Residual("torsion_s", max(worst.sup, rr.sup), max(worst.l2, rr.l2))
    return worst
