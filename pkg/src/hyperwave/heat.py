"""Harmonic-map heat flow in the auxiliary variable s.

Each wave-time slice is flowed by explicit Euler steps followed by radial
projection onto the sheet.  The time derivative phi_t rides along through
the exact linearisation of that discrete step, so that phi_t(s) is the true
t-derivative of the discrete ladder and agrees with differences of ladders
built at neighbouring times.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._kernels import heat_substeps
from .errors import NoConvergence, NotTimelike, StabilityViolation
from .geometry import Hyperboloid
from .grid import (FieldKind, Grid2D, MapField, central_diff, integrate, laplacian,
                   write_mapfield, write_snapshot)

STABILITY = 0.25


@dataclass(frozen=True)
class HeatConfig:
    """Geometric s-grid: level k spans ds0 * ratio**k.

    Each interval is split into equal Euler steps no longer than ``substep``
    (default: ds0).  ``ds0`` defaults to 0.2 h^2.  The stopping threshold is
    ``eps_stop`` when given, otherwise ``eps_rel`` times the initial
    sup-gradient.
    """

    ds0: float | None = None
    ratio: float = 1.2
    eps_rel: float = 1e-6
    eps_stop: float | None = None
    max_levels: int = 400
    substep: float | None = None

    def __post_init__(self):
        if not 1.0 < self.ratio <= 1.2:
            raise ValueError(f"ratio must lie in (1, 1.2], got {self.ratio}")
        if self.max_levels < 1:
            raise ValueError("max_levels must be positive")

    def step_size(self, grid):
        ds0 = 0.2 * grid.h ** 2 if self.ds0 is None else self.ds0
        if ds0 > STABILITY * grid.h ** 2 * (1 + 1e-12):
            raise StabilityViolation(f"ds0={ds0:g} exceeds h^2/4={STABILITY * grid.h ** 2:g}")
        return ds0

    def euler_step(self, grid):
        ds = self.step_size(grid) if self.substep is None else self.substep
        if ds > STABILITY * grid.h ** 2 * (1 + 1e-12):
            raise StabilityViolation(f"substep={ds:g} exceeds h^2/4={STABILITY * grid.h ** 2:g}")
        return ds

    def refined(self, grid):
        """An s-grid nesting the current one with every interval split in two.

        Level k of this grid is level 2k of the refined one, and the Euler
        sub-step shrinks with the first interval.
        """
        g = math.sqrt(self.ratio)
        ds0 = self.step_size(grid) / (1.0 + g)
        sub = None if self.substep is None else min(self.substep, ds0)
        return replace(self, ds0=ds0, ratio=g, max_levels=2 * self.max_levels, substep=sub)


def s_levels(ds0, ratio, K):
    steps = ds0 * ratio ** np.arange(K)
    return np.concatenate([[0.0], np.cumsum(steps)])


def tension(phi, h, target):
    """Tangent-projected Laplacian P_phi(Lap phi)."""
    return target.project_tangent(phi, laplacian(phi, h))


def sup_gradient_array(phi, h, target):
    g2 = 0.0
    for ax in (0, 1):
        d = target.project_tangent(phi, central_diff(phi, ax, h))
        g2 = g2 + target.inner(d, d)
    return float(np.sqrt(np.max(np.maximum(g2, 0.0))))


def sup_gradient(slice_: MapField) -> float:
    """max over nodes of |grad phi| with tangent-projected centred differences."""
    return sup_gradient_array(slice_.phi, slice_.grid.h, slice_.target)


def dirichlet_energy(phi, h, target):
    """Chord energy 1/2 sum_k sum_x |phi(x+e_k) - phi(x)|^2; the flow is its gradient flow."""
    tot = 0.0
    for ax in (0, 1):
        d = np.roll(phi, -1, axis=ax) - phi
        tot += np.sum(target.inner(d, d))
    return 0.5 * float(tot)


def central_dirichlet_energy(phi, h, target):
    dens = 0.0
    for ax in (0, 1):
        d = target.project_tangent(phi, central_diff(phi, ax, h))
        dens = dens + target.inner(d, d)
    return 0.5 * integrate(dens, h)


def _flow(phi, w, ds, nsub, h, target):
    carry = w is not None
    new, w_new, ok = heat_substeps(np.ascontiguousarray(phi, dtype=float),
                                   np.ascontiguousarray(phi if w is None else w, dtype=float),
                                   float(ds), int(nsub), float(h), float(target.kappa), carry)
    if not ok:
        raise NotTimelike("heat-flow predictor left the future cone; reduce ds")
    return new, (w_new if carry else None)


def heat_step(slice_: MapField, ds: float) -> MapField:
    """One explicit step of d_s phi = P_phi(Lap phi); phi_t follows the linearised step."""
    h = slice_.grid.h
    if ds > STABILITY * h * h * (1 + 1e-12):
        raise StabilityViolation(f"ds={ds:g} exceeds the explicit bound h^2/4={STABILITY * h * h:g}")
    phi, w = _flow(slice_.phi, slice_.phi_t, ds, 1, h, slice_.target)
    return MapField(slice_.grid, slice_.target, phi, w, slice_.t)


@dataclass
class HeatLadder:
    grid: Grid2D
    target: Hyperboloid
    base_t: float
    s_levels: np.ndarray
    phi: np.ndarray          # (K+1, n, n, m+1)
    phi_s: np.ndarray        # tangent-projected Laplacian at each level
    phi_t: np.ndarray        # carried t-derivative at each level
    phi_infinity: np.ndarray
    eps_stop: float
    sup_grad: np.ndarray
    dirichlet: np.ndarray
    config: HeatConfig
    converged: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def K(self):
        return len(self.s_levels) - 1

    def slice(self, k):
        return MapField(self.grid, self.target, self.phi[k], self.phi_t[k], self.base_t)

    def tail_distance(self):
        """sup_x d(phi(s_K, x), phi_infinity)."""
        return float(np.max(self.target.distance(self.phi_infinity, self.phi[-1])))

    def manifest(self):
        return {
            "base_t": self.base_t,
            "s_levels": self.s_levels.tolist(),
            "eps_stop": self.eps_stop,
            "phi_infinity": self.phi_infinity.tolist(),
            "sup_gradient": self.sup_grad.tolist(),
            "dirichlet_energy": self.dirichlet.tolist(),
            "tail_distance": self.tail_distance(),
            "converged": self.converged,
        }

    def dump(self, directory, every=1):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        keep = sorted(set(range(0, self.K + 1, every)) | {self.K})
        for k in keep:
            write_mapfield(d / f"level_{k:04d}.cwm", self.slice(k), s=float(self.s_levels[k]))
            write_snapshot(d / f"phi_s_{k:04d}.cwm", self.phi_s[k], FieldKind.PHI_T,
                           self.grid, self.target, self.base_t, float(self.s_levels[k]))
        man = self.manifest()
        man["retained_levels"] = keep
        (d / "manifest.json").write_text(json.dumps(man, indent=1))


def build_ladder(state: MapField, cfg: HeatConfig | None = None, levels=None) -> HeatLadder:
    """Flow ``state`` along the geometric s-grid until the sup-gradient drops below eps_stop.

    With ``levels`` (an array of s values starting at 0 and built from the
    same ds0/ratio) the ladder is forced onto exactly those levels and no
    stopping test is applied; this is how neighbouring-time ladders are
    matched.
    """
    cfg = cfg or HeatConfig()
    grid, H = state.grid, state.target
    h = grid.h
    ds0 = cfg.step_size(grid)
    ds_max = cfg.euler_step(grid)
    g0 = sup_gradient(state)
    eps = cfg.eps_stop if cfg.eps_stop is not None else cfg.eps_rel * g0
    phis, phits, sups, dirs = [state.phi], [state.phi_t], [g0], [dirichlet_energy(state.phi, h, H)]
    svals = [0.0]
    phi, w = state.phi, state.phi_t
    forced = levels is not None
    K = len(levels) - 1 if forced else cfg.max_levels
    converged = False
    for k in range(K):
        interval = ds0 * cfg.ratio ** k
        nsub = max(1, math.ceil(interval / ds_max - 1e-9))
        ds = interval / nsub
        phi, w = _flow(phi, w, ds, nsub, h, H)
        phis.append(phi)
        phits.append(w)
        svals.append(svals[-1] + interval if not forced else float(levels[k + 1]))
        sups.append(sup_gradient_array(phi, h, H))
        dirs.append(dirichlet_energy(phi, h, H))
        if not forced and sups[-1] <= eps:
            converged = True
            break
    converged = converged or forced
    phi_arr = np.array(phis)
    ladder = HeatLadder(
        grid, H, state.t, np.array(svals), phi_arr,
        np.array([tension(p, h, H) for p in phi_arr]), np.array(phits),
        H.mean(phi_arr[-1]), float(eps), np.array(sups), np.array(dirs), cfg, converged,
    )
    if not converged:
        raise NoConvergence(
            f"sup-gradient {sups[-1]:.3e} still above eps_stop={eps:.3e} after {cfg.max_levels} levels",
            ladder=ladder,
        )
    return ladder


def build_ladders(states, cfg=None, workers=1):
    """Ladders for several slices, all forced onto the levels of the first one.

    The first (reference) ladder decides the stopping level; the others are
    built on its s-grid.  Results do not depend on ``workers``.
    """
    states = list(states)
    ref_idx = len(states) // 2
    ref = build_ladder(states[ref_idx], cfg)
    others = [i for i in range(len(states)) if i != ref_idx]

    def one(i):
        return build_ladder(states[i], ref.config, levels=ref.s_levels)

    if workers > 1 and others:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            built = list(ex.map(one, others))
    else:
        built = [one(i) for i in others]
    out = [None] * len(states)
    out[ref_idx] = ref
    for i, lad in zip(others, built):
        out[i] = lad
    return out
