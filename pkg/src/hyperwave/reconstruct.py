"""Recovering the connection and the derivative fields from the heat-tension field,
and rebuilding the map itself from its s = 0 fields.

Integrals over s run from a level s_k to the top of the ladder with the
trapezoid rule on the (non-uniform) level grid.  The part beyond s_K is not
dropped silently: it is bounded by an exponential fit over the last levels.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import TailTooLarge
from .gauge import GaugeFieldSet
from .geometry import Hyperboloid
from .identities import matvec, wedge
from .grid import central_diff

TAIL_LEVELS = 5
DEFAULT_TAIL_TOL = 1e-4


def cumulative_from_top(f, s):
    """I[k] = integral of f from s_k to s_K (trapezoid); f has the level axis first."""
    f = np.asarray(f, dtype=float)
    ds = np.diff(s).reshape((-1,) + (1,) * (f.ndim - 1))
    seg = 0.5 * ds * (f[:-1] + f[1:])
    out = np.zeros_like(f)
    out[:-1] = np.cumsum(seg[::-1], axis=0)[::-1]
    return out


def coarse_cumulative(f, s):
    """The same integral using only every other level from s_k (one short final step if needed)."""
    f = np.asarray(f, dtype=float)
    K = len(s) - 1
    out = np.zeros_like(f)
    for p in (0, 1):
        idx = np.arange(p, K + 1, 2)
        if idx[-1] != K:
            idx = np.append(idx, K)
        part = cumulative_from_top(f[idx], s[idx])
        for j, k in enumerate(idx):
            if (k - p) % 2 == 0:
                out[k] = part[j]
    return out


def tail_bound(f, s, kappa=1.0, nfit=TAIL_LEVELS):
    """|kappa| * integral over (s_K, inf) of the exponential fit exp(c - mu s) to sup|f|.

    Returns (bound, mu).  A non-decaying fit gives an infinite bound.
    """
    g = np.array([float(np.max(np.abs(x))) if np.size(x) else 0.0 for x in f[-nfit:]])
    ss = np.asarray(s[-nfit:], dtype=float)
    if np.all(g == 0):
        return 0.0, float("inf")
    if np.any(g <= 0) or len(g) < 2:
        return float("inf"), 0.0
    mu, c = np.polyfit(ss, np.log(g), 1)
    mu = -mu
    if not mu > 0:
        return float("inf"), float(mu)
    return float(abs(kappa) * np.exp(c - mu * ss[-1]) / mu), float(mu)


@dataclass
class Reconstruction:
    """One reconstructed field compared with its extracted counterpart."""

    name: str
    reconstructed: np.ndarray
    residual_sup: np.ndarray       # per level
    quadrature_error: np.ndarray   # per level, trapezoid vs every-other-level trapezoid
    tail: float
    decay_rate: float
    extra: dict = field(default_factory=dict)

    def within_budget(self, level=0, slack=1.0):
        return bool(self.residual_sup[level] <= slack * (self.quadrature_error[level] + self.tail))

    def summary(self, level=0):
        return {"name": self.name, "residual_sup": float(self.residual_sup[level]),
                "quadrature_error": float(self.quadrature_error[level]), "tail_bound": self.tail,
                "decay_rate": self.decay_rate, **{k: v for k, v in self.extra.items()
                                                  if np.isscalar(v)}}


def _alphas(fs):
    return (0, 1, 2) if fs.has_time else (1, 2)


def _sup_per_level(x):
    return np.max(np.abs(x.reshape(x.shape[0], -1)), axis=1)


def reconstruct_A(fs: GaugeFieldSet, tol=DEFAULT_TAIL_TOL) -> Reconstruction:
    """A_a(s_k) = -kappa * integral_{s_k}^{inf} psi_s ^ psi_a ds for each available a."""
    al = _alphas(fs)
    integrand = np.stack([fs.kappa * wedge(fs.psi_s, fs.psi[:, a]) for a in al], axis=1)
    rec = -cumulative_from_top(integrand, fs.s_levels)
    coarse = -coarse_cumulative(integrand, fs.s_levels)
    tail, mu = tail_bound(integrand, fs.s_levels, 1.0)
    if tail > tol:
        raise TailTooLarge(f"A tail bound {tail:.3e} exceeds tolerance {tol:.3e}")
    ext = fs.A[:, list(al)]
    return Reconstruction("A_fundamental", rec, _sup_per_level(rec - ext),
                          _sup_per_level(rec - coarse), tail, mu,
                          {"alphas": list(al), "A_scale": float(np.max(np.abs(ext)))})


def reconstruct_psi(fs: GaugeFieldSet, tol=DEFAULT_TAIL_TOL) -> Reconstruction:
    """psi_a(s_k) = -d_a integral psi_s ds - Psi_a,  Psi_a = integral A_a psi_s ds.

    ``extra`` carries Psi, its size relative to psi, and Psi recomputed with the
    reconstructed connection (a double integral) as a cross-check.
    """
    s = fs.s_levels
    al = _alphas(fs)
    Ipsi = cumulative_from_top(fs.psi_s, s)
    Ipsi_c = coarse_cumulative(fs.psi_s, s)
    prod = np.stack([matvec(fs.A[:, a], fs.psi_s) for a in al], axis=1)
    Psi = cumulative_from_top(prod, s)
    Psi_c = coarse_cumulative(prod, s)
    tail_s, mu = tail_bound(fs.psi_s, s, 1.0)
    tail_p, _ = tail_bound(prod, s, 1.0)
    # the d_a of the tail integral is bounded via the tail of d_a psi_s
    grad_tail = max(tail_bound(central_diff(fs.psi_s, ax, fs.h), s, 1.0)[0] for ax in (1, 2))
    tail = grad_tail + tail_p
    if not fs.has_time:
        tail_t = 0.0
    else:
        mi, pl = fs.neighbours
        tail_t = tail_bound((pl.psi_s - mi.psi_s) / (2 * fs.dt), s, 1.0)[0]
    tail = max(tail, tail_t + tail_p)
    if tail > tol:
        raise TailTooLarge(f"psi tail bound {tail:.3e} exceeds tolerance {tol:.3e}")

    def grad(I, Ineighbour=None):
        parts = []
        for a in al:
            if a == 0:
                parts.append(Ineighbour)
            else:
                parts.append(central_diff(I, a, fs.h))
        return np.stack(parts, axis=1)

    dt_I = dt_Ic = None
    if fs.has_time:
        mi, pl = fs.neighbours
        dt_I = (cumulative_from_top(pl.psi_s, s) - cumulative_from_top(mi.psi_s, s)) / (2 * fs.dt)
        dt_Ic = (coarse_cumulative(pl.psi_s, s) - coarse_cumulative(mi.psi_s, s)) / (2 * fs.dt)
    rec = -grad(Ipsi, dt_I) - Psi
    rec_c = -grad(Ipsi_c, dt_Ic) - Psi_c
    ext = fs.psi[:, list(al)]

    A_rec = reconstruct_A(fs, tol=np.inf).reconstructed
    Psi_double = cumulative_from_top(np.stack([matvec(A_rec[:, i], fs.psi_s)
                                               for i in range(len(al))], axis=1), s)
    psi_norm = float(np.sqrt(np.sum(ext[0] ** 2) * fs.h ** 2))
    Psi_norm = float(np.sqrt(np.sum(Psi[0] ** 2) * fs.h ** 2))
    extra = {
        "alphas": list(al),
        "Psi": Psi,
        "Psi_norm": Psi_norm,
        "psi_norm": psi_norm,
        "Psi_ratio": Psi_norm / psi_norm if psi_norm else 0.0,
        "Psi_double_integral_gap": float(np.max(np.abs(Psi_double[0] - Psi[0]))),
    }
    return Reconstruction("psi_gradient", rec, _sup_per_level(rec - ext),
                          _sup_per_level(rec - rec_c), tail, mu, extra)


# --- rebuilding the map from its s = 0 fields ------------------------------

def _march(H, phi0, e0, psi, A, h, axis):
    """Integrate d phi = e psi, d e = e A along ``axis`` from index 0.

    phi0 (B, d), e0 (B, m, d) are the starting values for a batch of lines;
    psi (n, B, m) and A (n, B, m, m) are the fields along the lines.
    Each step uses midpoint values and the rotation exp(h A-bar / 2) for the
    displacement, then transports the rotated frame.
    """
    n = psi.shape[0]
    phis = np.empty((n,) + phi0.shape)
    es = np.empty((n,) + e0.shape)
    phis[0], es[0] = phi0, e0
    for i in range(n - 1):
        pb = 0.5 * (psi[i] + psi[i + 1])
        Ab = 0.5 * (A[i] + A[i + 1])
        half = expm(0.5 * h * Ab)
        full = expm(h * Ab)
        v = np.einsum("bi,bic->bc", matvec(half, pb), es[i])
        nxt = H.project_point(H.exp(phis[i], h * v))
        rot = np.einsum("bij,bic->bjc", full, es[i])
        es[i + 1] = H.orthonormalize(nxt, H.transport(phis[i], nxt, rot))
        phis[i + 1] = nxt
    return phis, es


def reconstruct_map(fields_level0, H: Hyperboloid, h, base_point, base_frame, reference=None):
    """Rebuild phi from (psi_x1, psi_x2, A_x1, A_x2) at s = 0 starting at node (0, 0).

    ``fields_level0`` is a pair (psi (3, n, n, m), A (3, n, n, m, m)).  Both
    orders of integration are carried out; returns (phi, e, report) where
    phi/e come from the row-then-column sweep and report holds the
    path-dependence and, when ``reference`` is given, the sup distance to it.
    """
    psi, A = fields_level0
    p0 = np.asarray(base_point, dtype=float)[None]
    e0 = np.asarray(base_frame, dtype=float)[None]
    # rows first: along x1 on the line x2 = 0, then along x2 from every node
    ph1, ef1 = _march(H, p0, e0, psi[1][:, :1], A[1][:, :1], h, 0)
    phiA, eA = _march(H, ph1[:, 0], ef1[:, 0], np.swapaxes(psi[2], 0, 1),
                      np.swapaxes(A[2], 0, 1), h, 1)
    phiA, eA = np.swapaxes(phiA, 0, 1), np.swapaxes(eA, 0, 1)
    # columns first
    ph2, ef2 = _march(H, p0, e0, np.swapaxes(psi[2], 0, 1)[:, :1], np.swapaxes(A[2], 0, 1)[:, :1], h, 1)
    phiB, eB = _march(H, ph2[:, 0], ef2[:, 0], psi[1], A[1], h, 0)
    report = {"path_dependence": float(np.max(H.distance(phiA, phiB)))}
    if reference is not None:
        report["discrepancy"] = float(np.max(H.distance(phiA, reference)))
        report["discrepancy_other_order"] = float(np.max(H.distance(phiB, reference)))
    return phiA, eA, report
