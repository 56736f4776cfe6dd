"""Constant negative curvature target in the hyperboloid model.

Points of H^m are stored as ambient vectors x = (x^0, ..., x^m) on the upper
sheet <x, x>_M = -1/|kappa| of Minkowski space R^{1,m}.  Tangent vectors at p
are ambient vectors v with <p, v>_M = 0.  Every function broadcasts over
leading axes; the ambient coordinate is always the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrame, NotTimelike

POINT_TOL = 1e-12
TANGENT_TOL = 1e-10
FRAME_TOL = 1e-10


def mink_inner(u, v):
    """Ambient bilinear form of signature (-, +, ..., +) over the last axis."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return -u[..., 0] * v[..., 0] + np.sum(u[..., 1:] * v[..., 1:], axis=-1)


def mink_sq(u):
    return mink_inner(u, u)


def minkowski_signs(d):
    s = np.ones(d)
    s[0] = -1.0
    return s


@dataclass(frozen=True)
class Hyperboloid:
    """The target N = H^m with sectional curvature ``kappa``."""

    m: int = 2
    kappa: float = -1.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"target dimension m must be an integer >= 2, got {self.m}")
        if not self.kappa < 0:
            raise ValueError(f"kappa must be negative, got {self.kappa}")

    @property
    def dim(self):
        """Ambient dimension m + 1."""
        return self.m + 1

    @property
    def r2(self):
        return 1.0 / abs(self.kappa)

    @property
    def radius(self):
        return 1.0 / np.sqrt(-self.kappa)

    def origin(self):
        o = np.zeros(self.dim)
        o[0] = self.radius
        return o

    def standard_frame(self):
        """Coordinate frame at :meth:`origin`, shape (m, m+1)."""
        return np.eye(self.dim)[1:]

    inner = staticmethod(mink_inner)

    def norm(self, v):
        """Induced norm of tangent vectors (clipped at 0 against rounding)."""
        return np.sqrt(np.maximum(mink_sq(v), 0.0))

    def project_point(self, v):
        v = np.asarray(v, dtype=float)
        q = mink_sq(v)
        if np.any(~(q < 0)) or np.any(~(v[..., 0] > 0)):
            bad = int(np.count_nonzero(~((q < 0) & (v[..., 0] > 0))))
            raise NotTimelike(
                f"{bad} ambient vector(s) are not future timelike; "
                "step size too large or solution focusing"
            )
        return v / np.sqrt(abs(self.kappa) * -q)[..., None]

    def is_point(self, x, tol=POINT_TOL):
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(mink_sq(x) + self.r2) <= tol * max(1.0, self.r2))
                    and np.all(x[..., 0] > 0))

    def project_tangent(self, p, v):
        """Orthogonal projection of ambient ``v`` onto T_p N."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        return v + (abs(self.kappa) * mink_inner(v, p))[..., None] * p

    def distance(self, p, q):
        # arcsinh of the tangential part is accurate at short range, unlike arccosh
        u = self.project_tangent(p, q)
        r = self.radius
        return r * np.arcsinh(self.norm(u) / r)

    def exp(self, p, v):
        """Closed-form geodesic exponential."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        r = self.radius
        nv = self.norm(v)
        a = nv / r
        small = a < 1e-8
        safe = np.where(small, 1.0, a)
        # sinh(a)/a with a series fallback near zero
        sinhc = np.where(small, 1.0 + a * a / 6.0, np.sinh(safe) / safe)
        return np.cosh(a)[..., None] * p + sinhc[..., None] * v

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        u = self.project_tangent(p, q)
        r = self.radius
        nu = self.norm(u)
        b = nu / r
        small = b < 1e-8
        safe = np.where(small, 1.0, b)
        # d / |u| = r arcsinh(b) / (r b)
        ratio = np.where(small, 1.0 - b * b / 6.0, np.arcsinh(safe) / safe)
        return ratio[..., None] * u

    def transport(self, p, q, v):
        """Levi-Civita parallel transport of ``v`` from p to q along the geodesic.

        ``v`` may carry extra axes between the batch axes and the ambient axis
        (e.g. a frame of shape (..., m, m+1)); p and q broadcast against it.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        denom = self.r2 - mink_inner(p, q)
        if v.ndim > p.ndim:
            extra = v.ndim - p.ndim
            qq = q.reshape(q.shape[:-1] + (1,) * extra + q.shape[-1:])
            pq = (p + q).reshape(qq.shape)
            dd = denom.reshape(denom.shape + (1,) * extra)
            return v + (mink_inner(qq, v) / dd)[..., None] * pq
        return v + (mink_inner(q, v) / denom)[..., None] * (p + q)

    def curvature(self, X, Y, Z):
        """R(X, Y)Z = kappa (<Y,Z> X - <X,Z> Y)."""
        return self.kappa * (mink_inner(Y, Z)[..., None] * X - mink_inner(X, Z)[..., None] * Y)

    def orthonormalize(self, p, raw, tol=FRAME_TOL):
        """Gram-Schmidt (two passes) of the tangent projections of ``raw``.

        ``raw`` has shape (..., m, m+1); row j is the j-th frame vector.
        """
        p = np.asarray(p, dtype=float)
        raw = np.asarray(raw, dtype=float)
        vecs = self.project_tangent(p[..., None, :], raw)
        scale = np.maximum(self.norm(raw), 1e-300)
        out = np.empty_like(vecs)
        for j in range(vecs.shape[-2]):
            w = vecs[..., j, :].copy()
            for _ in range(2):
                for i in range(j):
                    w = w - mink_inner(w, out[..., i, :])[..., None] * out[..., i, :]
            nw = self.norm(w)
            if np.any(nw <= tol * scale[..., j]):
                raise DegenerateFrame("frame vectors are linearly dependent after projection")
            out[..., j, :] = w / nw[..., None]
        return out

    def frame_at(self, p, ref_point=None, ref_frame=None):
        """Transport a reference frame (default: standard frame at the origin) to p."""
        if ref_point is None:
            ref_point = self.origin()
        if ref_frame is None:
            ref_frame = self.standard_frame()
        return self.orthonormalize(p, self.transport(ref_point, p, ref_frame))

    def mean(self, points, tol=1e-14, max_iter=100):
        """Riemannian (Karcher) mean of a point cloud of shape (N, m+1)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        mu = self.project_point(pts.mean(axis=0))
        for _ in range(max_iter):
            step = self.log(mu, pts).mean(axis=0)
            mu = self.project_point(self.exp(mu, step))
            if self.norm(step) <= tol * self.radius:
                break
        return mu


def wedge(u, v):
    """Matrix of (u ^ v) w := u <v, w> - v <u, w> for R^m-valued u, v."""
    u = np.asarray(u)
    v = np.asarray(v)
    return u[..., :, None] * v[..., None, :] - v[..., :, None] * u[..., None, :]
