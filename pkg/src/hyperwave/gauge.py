"""Caloric frames along a heat ladder and the differentiated fields they induce.

Frames are stored as arrays of shape (..., m, m+1) whose rows are e_1..e_m.
Field arrays put the ladder level first and, where relevant, the spacetime
index alpha in {t, x1, x2} second:

    psi    (K+1, 3, n, n, m)
    A      (K+1, 3, n, n, m, m)    A[..., i, j] = <d e_j, e_i>, antisymmetrised
    psi_s  (K+1, n, n, m)
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridMismatch, NotOrthogonal
from .geometry import minkowski_signs
from .grid import central_diff
from .heat import HeatLadder

ORTHO_TOL = 1e-10


def _sgn(x):
    return x * minkowski_signs(x.shape[-1])


def frame_components(frame, v):
    """Components <v, e_i> of ambient vectors ``v`` (..., d) in ``frame`` (..., m, d)."""
    return np.einsum("...ic,...c->...i", frame, _sgn(v))


def overlap(e_a, e_b):
    """Matrix O[i, j] = <e_b[j], e_a[i]> between two frames."""
    return np.einsum("...ic,...jc->...ij", e_a, _sgn(e_b))


def skew(M):
    return 0.5 * (M - np.swapaxes(M, -1, -2))


@dataclass
class FrameField:
    ladder: HeatLadder
    e: np.ndarray                  # (K+1, n, n, m, m+1)
    e_seed: np.ndarray             # frame at phi_infinity
    transport_residual: np.ndarray  # (K,) sup of |<e_j(k+1) - e_j(k), e_i(k)>|

    @property
    def e_infinity(self):
        return self.e_seed

    def transport_constant(self):
        """max_k residual_k / (s_{k+1} - s_k)^2, the constant C in the O(ds^2) bound."""
        ds = np.diff(self.ladder.s_levels)
        if len(ds) == 0:
            return 0.0
        return float(np.max(self.transport_residual / ds ** 2))

    def transport_bound(self):
        """Per-step a-priori bound |kappa| |phi(s_{k+1}) - phi(s_k)|^2 / 2 (sup over nodes)."""
        lad = self.ladder
        H = lad.target
        d = np.diff(lad.phi, axis=0)
        return 0.5 * abs(H.kappa) * np.max(np.maximum(H.inner(d, d), 0.0), axis=(1, 2))

    def orthonormality_defect(self):
        G = overlap(self.e, self.e)
        return float(np.max(np.abs(G - np.eye(G.shape[-1]))))


def transport_frame(ladder: HeatLadder, e_seed=None) -> FrameField:
    """Caloric frames: transport e_seed to phi(s_K), then backwards level by level."""
    H = ladder.target
    p_inf = ladder.phi_infinity
    if e_seed is None:
        e_seed = H.frame_at(p_inf)
    e_seed = H.orthonormalize(p_inf, e_seed)
    K = ladder.K
    e = np.empty(ladder.phi.shape[:-1] + (H.m, H.dim))
    e[K] = H.orthonormalize(ladder.phi[K], H.transport(p_inf, ladder.phi[K], e_seed))
    res = np.zeros(K)
    for k in range(K - 1, -1, -1):
        e[k] = H.orthonormalize(ladder.phi[k], H.transport(ladder.phi[k + 1], ladder.phi[k], e[k + 1]))
        O = overlap(e[k], e[k + 1] - e[k])
        res[k] = float(np.max(np.abs(O))) if O.size else 0.0
    return FrameField(ladder, e, e_seed, res)


@dataclass
class GaugeFieldSet:
    s_levels: np.ndarray
    h: float
    kappa: float
    psi: np.ndarray
    A: np.ndarray
    psi_s: np.ndarray
    has_time: bool = False
    dt: float | None = None
    neighbours: tuple | None = None   # (minus, plus) GaugeFieldSets at t -/+ dt
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.psi.shape[-1]

    @property
    def K(self):
        return len(self.s_levels) - 1

    def level(self, k):
        """Fields at one level, s-axis dropped (psi (3, n, n, m), A (3, n, n, m, m))."""
        return self.psi[k], self.A[k], self.psi_s[k]

    def norms(self):
        return np.sqrt(np.sum(self.psi ** 2, axis=-1))

    def t_derivative(self, name, k=0):
        """Centred t-derivative of the named field (``psi``, ``A`` or ``psi_s``) at level k."""
        if not self.has_time:
            raise GridMismatch("t-derivatives need neighbouring ladders at t -/+ dt")
        mi, pl = self.neighbours
        return (getattr(pl, name)[k] - getattr(mi, name)[k]) / (2.0 * self.dt)


def _spatial_fields(frames: FrameField):
    lad = frames.ladder
    H = lad.target
    h = lad.grid.h
    e = frames.e
    psi = np.zeros(e.shape[:-2] + (3, H.m))
    A = np.zeros(e.shape[:-2] + (3, H.m, H.m))
    psi[..., 0, :] = frame_components(e, lad.phi_t)
    for ax in (0, 1):
        dphi = central_diff(lad.phi, ax + 1, h)
        psi[..., ax + 1, :] = frame_components(e, dphi)
        links = overlap(e, np.roll(e, -1, axis=ax + 1)) - overlap(e, np.roll(e, 1, axis=ax + 1))
        A[..., ax + 1, :, :] = skew(links / (2.0 * h))
    psi_s = frame_components(e, lad.phi_s)
    # move alpha to axis 1
    return np.moveaxis(psi, -2, 1), np.moveaxis(A, -3, 1), psi_s


def _check_matched(*frames):
    ref = frames[0].ladder
    for f in frames[1:]:
        lad = f.ladder
        if lad.grid != ref.grid or lad.target != ref.target:
            raise GridMismatch("ladders live on different grids or targets")
        if len(lad.s_levels) != len(ref.s_levels) or np.any(lad.s_levels != ref.s_levels):
            raise GridMismatch("ladders do not share the same s-levels")


def extract_fields(frames: FrameField, minus: FrameField | None = None,
                   plus: FrameField | None = None, dt: float | None = None) -> GaugeFieldSet:
    """psi_alpha, A_alpha and psi_s on every level.

    With frames of the ladders at t - dt and t + dt, A_t is the centred
    frame derivative and the neighbouring field sets (with one-sided A_t)
    are attached for t-differencing.
    """
    lad = frames.ladder
    psi, A, psi_s = _spatial_fields(frames)
    fs = GaugeFieldSet(lad.s_levels.copy(), lad.grid.h, lad.target.kappa, psi, A, psi_s)
    if minus is None and plus is None:
        return fs
    if minus is None or plus is None or not dt:
        raise GridMismatch("both neighbouring ladders and dt are required")
    _check_matched(frames, minus, plus)
    e0, em, ep = frames.e, minus.e, plus.e
    eye = np.eye(lad.target.m)
    A[:, 0] = skew((overlap(e0, ep) - overlap(e0, em)) / (2.0 * dt))
    pm, Am, sm = _spatial_fields(minus)
    pp, Ap, sp = _spatial_fields(plus)
    # one-sided second-order frame derivatives at the outer times
    Ap[:, 0] = skew((3.0 * eye - 4.0 * overlap(ep, e0) + overlap(ep, em)) / (2.0 * dt))
    Am[:, 0] = -skew((3.0 * eye - 4.0 * overlap(em, e0) + overlap(em, ep)) / (2.0 * dt))
    kw = dict(h=lad.grid.h, kappa=lad.target.kappa)
    nb = (GaugeFieldSet(lad.s_levels.copy(), psi=pm, A=Am, psi_s=sm, **kw),
          GaugeFieldSet(lad.s_levels.copy(), psi=pp, A=Ap, psi_s=sp, **kw))
    return replace(fs, A=A, has_time=True, dt=float(dt), neighbours=nb)


def _as_rotation(U, m):
    U = np.asarray(U, dtype=float)
    if U.shape[-2:] != (m, m):
        raise NotOrthogonal(f"gauge matrix must be {m}x{m}, got shape {U.shape}")
    defect = np.max(np.abs(U @ np.swapaxes(U, -1, -2) - np.eye(m)))
    if defect > ORTHO_TOL:
        raise NotOrthogonal(f"U U^T deviates from the identity by {defect:.3e}")
    return U


def rotate_frames(frames: FrameField, U) -> FrameField:
    """e -> e U^{-1}: new e'_j = sum_a U[j, a] e_a, the same U on every level."""
    U = _as_rotation(U, frames.ladder.target.m)
    if U.ndim > 2:
        e = np.einsum("xyja,kxyac->kxyjc", U, frames.e)
    else:
        e = np.einsum("ja,...ac->...jc", U, frames.e)
    seed = frames.e_seed if U.ndim > 2 else U @ frames.e_seed
    return FrameField(frames.ladder, e, seed, frames.transport_residual)


def gauge_transform(frames: FrameField, U, minus=None, plus=None, dt=None):
    """Apply an s-independent rotation field U(x) (or constant U) to the gauge.

    Returns (fields', frames').  psi' = U psi exactly; A' is recomputed from
    the rotated frames, which realises U A U^{-1} + (dU) U^{-1} discretely and
    makes repeated transforms compose exactly.  Neighbouring frames, when
    given, are rotated by the same U (a t-independent gauge).
    """
    new = rotate_frames(frames, U)
    if minus is None:
        return extract_fields(new), new
    nm, np_ = rotate_frames(minus, U), rotate_frames(plus, U)
    return extract_fields(new, nm, np_, dt), (nm, new, np_)


def random_rotation(m, rng):
    """Haar-random element of SO(m)."""
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q
