"""Compiled inner loops for the heat flow.

Node loops run in a fixed order, so results are bit-reproducible.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _heat_general(phi, w, ds, nsub, h, kappa, carry):
    """``nsub`` explicit heat steps with radial projection.

    When ``carry`` is true, ``w`` is pushed through the exact linearisation
    of each step.  Returns (phi, w, ok); ok is False if a predictor left
    the future cone.
    """
    n = phi.shape[0]
    d = phi.shape[2]
    k = abs(kappa)
    r = 1.0 / np.sqrt(k)
    inv = 1.0 / (h * h)
    cur = phi.copy()
    nxt = np.empty_like(cur)
    wc = w.copy()
    wn = np.empty_like(wc)
    lap = np.empty(d)
    lw = np.empty(d)
    y = np.empty(d)
    z = np.empty(d)
    up = np.empty(n, dtype=np.int64)
    dn = np.empty(n, dtype=np.int64)
    for i in range(n):
        up[i] = (i + 1) % n
        dn[i] = (i - 1) % n
    for _ in range(nsub):
        for i in range(n):
            ip = up[i]
            im = dn[i]
            for j in range(n):
                jp = up[j]
                jm = dn[j]
                lp = 0.0
                for c in range(d):
                    pc = cur[i, j, c]
                    lc = (cur[im, j, c] + cur[ip, j, c] + cur[i, jm, c] + cur[i, jp, c]
                          - 4.0 * pc) * inv
                    lap[c] = lc
                    lp += lc * pc if c > 0 else -lc * pc
                yy = 0.0
                for c in range(d):
                    pc = cur[i, j, c]
                    yc = pc + ds * (lap[c] + k * lp * pc)
                    y[c] = yc
                    yy += yc * yc if c > 0 else -yc * yc
                if not (yy < 0.0 and y[0] > 0.0):
                    return cur, wc, False
                rho2 = -yy
                rho = np.sqrt(rho2)
                for c in range(d):
                    nxt[i, j, c] = r * y[c] / rho
                if carry:
                    a = 0.0
                    for c in range(d):
                        qc = wc[i, j, c]
                        lc = (wc[im, j, c] + wc[ip, j, c] + wc[i, jm, c] + wc[i, jp, c]
                              - 4.0 * qc) * inv
                        lw[c] = lc
                        t = lc * cur[i, j, c] + lap[c] * qc
                        a += t if c > 0 else -t
                    yz = 0.0
                    for c in range(d):
                        zc = wc[i, j, c] + ds * (lw[c] + k * a * cur[i, j, c] + k * lp * wc[i, j, c])
                        z[c] = zc
                        yz += zc * y[c] if c > 0 else -zc * y[c]
                    yz /= rho2
                    for c in range(d):
                        wn[i, j, c] = (r / rho) * (z[c] + yz * y[c])
        cur, nxt = nxt, cur
        if carry:
            wc, wn = wn, wc
    return cur, wc, True


@njit(cache=True)
def _heat_h2(phi, w, ds, nsub, h, kappa, carry):
    """Unrolled copy of :func:`_heat_general` for H^2 (ambient dimension 3)."""
    n = phi.shape[0]
    k = abs(kappa); r = 1.0/np.sqrt(k); inv = 1.0/(h*h)
    cur = phi.copy(); nxt = np.empty_like(cur); wc = w.copy(); wn = np.empty_like(wc)
    for _ in range(nsub):
        for i in range(n):
            ip = i+1 if i+1<n else 0
            im = i-1 if i>0 else n-1
            for j in range(n):
                jp = j+1 if j+1<n else 0
                jm = j-1 if j>0 else n-1
                p0=cur[i,j,0];p1=cur[i,j,1];p2=cur[i,j,2]
                l0=(cur[im,j,0]+cur[ip,j,0]+cur[i,jm,0]+cur[i,jp,0]-4.0*p0)*inv
                l1=(cur[im,j,1]+cur[ip,j,1]+cur[i,jm,1]+cur[i,jp,1]-4.0*p1)*inv
                l2=(cur[im,j,2]+cur[ip,j,2]+cur[i,jm,2]+cur[i,jp,2]-4.0*p2)*inv
                lp=-l0*p0+l1*p1+l2*p2
                y0=p0+ds*(l0+k*lp*p0);y1=p1+ds*(l1+k*lp*p1);y2=p2+ds*(l2+k*lp*p2)
                yy=-y0*y0+y1*y1+y2*y2
                if not (yy<0.0 and y0>0.0):
                    return cur,wc,False
                rho2=-yy; rho=np.sqrt(rho2)
                nxt[i,j,0]=r*y0/rho;nxt[i,j,1]=r*y1/rho;nxt[i,j,2]=r*y2/rho
                if carry:
                    q0=wc[i,j,0];q1=wc[i,j,1];q2=wc[i,j,2]
                    m0=(wc[im,j,0]+wc[ip,j,0]+wc[i,jm,0]+wc[i,jp,0]-4.0*q0)*inv
                    m1=(wc[im,j,1]+wc[ip,j,1]+wc[i,jm,1]+wc[i,jp,1]-4.0*q1)*inv
                    m2=(wc[im,j,2]+wc[ip,j,2]+wc[i,jm,2]+wc[i,jp,2]-4.0*q2)*inv
                    a=(-m0*p0+m1*p1+m2*p2)+(-l0*q0+l1*q1+l2*q2)
                    z0=q0+ds*(m0+k*a*p0+k*lp*q0);z1=q1+ds*(m1+k*a*p1+k*lp*q1);z2=q2+ds*(m2+k*a*p2+k*lp*q2)
                    yz=(-y0*z0+y1*z1+y2*z2)/rho2
                    s=r/rho
                    wn[i,j,0]=s*(z0+yz*y0);wn[i,j,1]=s*(z1+yz*y1);wn[i,j,2]=s*(z2+yz*y2)
        cur,nxt=nxt,cur
        if carry:
            wc,wn=wn,wc
    return cur,wc,True


def heat_substeps(phi, w, ds, nsub, h, kappa, carry):
    kern = _heat_h2 if phi.shape[2] == 3 else _heat_general
    return kern(phi, w, ds, nsub, h, kappa, carry)
