"""Wave-map evolution at s = 0 and initial-data families.

The map is evolved extrinsically: phi_tt = Lap(phi) + |kappa| (|phi_t|^2 - |grad phi|^2) phi,
where the multiplier is whatever keeps phi on the sheet.  The discrete step is
RATTLE: a Stormer-Verlet position update whose multiplier is solved for
exactly, followed by a tangent projection of the velocity.  The step is
time-reversible and, for power-of-two rescalings, exactly scale covariant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NotTimelike, SupportTooLarge
from .geometry import Hyperboloid
from .grid import Grid2D, MapField, integrate, laplacian, spatial_derivatives

BUMP_POWER = 8


@dataclass(frozen=True)
class DataSpec:
    """Initial-data family.

    kind is one of ``geodesic_bump``, ``multi_bump`` or ``boosted_bump``.
    ``directions`` are unit vectors in R^m, read in the standard frame at p0
    (transported from the origin).  For ``multi_bump`` there is one center,
    amplitude and direction per bump; other kinds use the first entry.
    ``drift`` adds the velocity -drift * d_1 phi to any kind.
    """

    kind: str = "geodesic_bump"
    amplitude: float | Sequence[float] = 1.0
    width: float = 0.125
    centers: Sequence[Sequence[float]] = ((0.5, 0.5),)
    directions: Sequence[Sequence[float]] = ((1.0, 0.0),)
    p0: Sequence[float] | None = None
    speed: float = 0.5
    power: int = BUMP_POWER
    drift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("geodesic_bump", "multi_bump", "boosted_bump"):
            raise ValueError(f"unknown data kind {self.kind!r}")
        if not self.width > 0:
            raise ValueError("bump width must be positive")
        if abs(self.speed) >= 1:
            raise ValueError("boost speed must be below the speed of light")


def bump(r2, width, power=BUMP_POWER):
    """Compactly supported profile (1 - r^2/w^2)^p, equal to 1 at the center."""
    z = np.clip(1.0 - r2 / (width * width), 0.0, None)
    return z ** power


def bump_energy(amplitude, power=BUMP_POWER):
    """Exact energy of a static geodesic bump: pi a^2 p / (2p - 1), width-free."""
    return np.pi * amplitude ** 2 * power / (2 * power - 1)


def _bump_list(spec):
    amps = np.atleast_1d(np.asarray(spec.amplitude, dtype=float))
    centers = np.atleast_2d(np.asarray(spec.centers, dtype=float))
    dirs = np.atleast_2d(np.asarray(spec.directions, dtype=float))
    if spec.kind != "multi_bump":
        return amps[:1], centers[:1], dirs[:1]
    k = len(centers)
    if len(amps) == 1:
        amps = np.repeat(amps, k)
    if len(dirs) == 1:
        dirs = np.repeat(dirs, k, axis=0)
    if not len(amps) == len(dirs) == k:
        raise ValueError("multi_bump needs matching centers, amplitudes and directions")
    return amps, centers, dirs


def make_initial_data(grid: Grid2D, target: Hyperboloid, spec: DataSpec, T: float = 0.0):
    """phi = exp_{p0}(sum_i chi_i(x) v_i); phi_t is zero unless boosted or drifting."""
    amps, centers, dirs = _bump_list(spec)
    if 2.0 * (spec.width + T) > grid.L:
        raise SupportTooLarge(
            f"bump of width {spec.width} evolved to T={T} does not fit a box of side {grid.L}")
    p0 = target.origin() if spec.p0 is None else target.project_point(np.asarray(spec.p0, float))
    frame = target.frame_at(p0)
    if dirs.shape[1] != target.m:
        raise ValueError(f"directions must have {target.m} components")
    v = np.zeros((grid.n, grid.n, target.dim))
    for a, c, d in zip(amps, centers, dirs):
        d = d / np.linalg.norm(d)
        y = grid.relative_coords(c)
        chi = a * bump(np.sum(y * y, axis=-1), spec.width, spec.power)
        v += chi[..., None] * (d @ frame)
    phi = target.exp(p0, v)
    phi = target.project_point(phi)
    phi_t = np.zeros_like(phi)
    state = MapField(grid, target, phi, phi_t)
    speed = spec.drift + (spec.speed if spec.kind == "boosted_bump" else 0.0)
    if speed:
        d1, _ = spatial_derivatives(state)
        state = state.with_velocity(-speed * d1)
    return state


def geodesic_data(grid, target, u0, u1, p0=None, direction=None):
    """Data phi = gamma(u0), phi_t = gamma'(u0) u1 on the unit-speed geodesic gamma."""
    p0 = target.origin() if p0 is None else np.asarray(p0, float)
    frame = target.frame_at(p0)
    d = np.zeros(target.m) if direction is None else np.asarray(direction, float)
    if direction is None:
        d[0] = 1.0
    v = (d / np.linalg.norm(d)) @ frame
    phi, gdot = geodesic_curve(target, p0, v, u0)
    phi = target.project_point(phi)
    return MapField(grid, target, phi, target.project_tangent(phi, gdot * u1[..., None]))


def geodesic_curve(target, p0, v, u):
    """gamma(u) and gamma'(u) for the unit-speed geodesic through p0 along unit v."""
    r = target.radius
    u = np.asarray(u, dtype=float)[..., None]
    gam = np.cosh(u / r) * p0 + r * np.sinh(u / r) * v
    dgam = np.sinh(u / r) / r * p0 + np.cosh(u / r) * v
    return gam, dgam


def dalembert_torus(u0, u1, L, t):
    """Exact solution of u_tt = Lap u on the periodic square of side L (FFT)."""
    n = u0.shape[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=L / n)
    K = np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)
    U0 = np.fft.fft2(u0)
    U1 = np.fft.fft2(u1)
    safe = np.where(K == 0, 1.0, K)
    sinc_t = np.where(K == 0, t, np.sin(K * t) / safe)
    return np.real(np.fft.ifft2(U0 * np.cos(K * t) + U1 * sinc_t))


def _solve_multiplier(target, w, phi):
    """c with <w + c phi, w + c phi> = -r^2, the root that vanishes with the defect."""
    r2 = target.r2
    a = target.inner(w, w)
    b = target.inner(w, phi)
    disc = b * b + r2 * (a + r2)
    if np.any(~(disc >= 0)):
        raise NotTimelike("constraint multiplier has no real solution; reduce dt")
    return (a + r2) / (np.sqrt(disc) - b)


def wave_step(state: MapField, dt: float) -> MapField:
    """One RATTLE step of size dt (negative dt steps backwards)."""
    H, h = state.target, state.grid.h
    phi, v = state.phi, state.phi_t
    w = phi + dt * v + (0.5 * dt * dt) * laplacian(phi, h)
    c = _solve_multiplier(H, w, phi)
    phi_new = H.project_point(w + c[..., None] * phi)
    v_half = (phi_new - phi) / dt
    v_new = H.project_tangent(phi_new, v_half + (0.5 * dt) * laplacian(phi_new, h))
    return MapField(state.grid, H, phi_new, v_new, state.t + dt)


def energy_density(state: MapField):
    """1/2 (|phi_t|^2 + |d1 phi|^2 + |d2 phi|^2) with tangent-projected derivatives."""
    H = state.target
    d1, d2 = spatial_derivatives(state)
    return 0.5 * (H.inner(state.phi_t, state.phi_t) + H.inner(d1, d1) + H.inner(d2, d2))


def energy(state: MapField) -> float:
    return integrate(energy_density(state), state.grid.h)


@dataclass
class Trajectory:
    states: list
    times: np.ndarray
    energies: np.ndarray
    dt: float
    step_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_energies: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.states)

    @property
    def grid(self):
        return self.states[0].grid

    @property
    def target(self):
        return self.states[0].target

    def relative_drift(self):
        e = self.step_energies if len(self.step_energies) else self.energies
        return float(abs(e[-1] - e[0]) / e[0]) if e[0] else float(abs(e[-1] - e[0]))


def n_steps(T, dt):
    k = int(round(T / dt))
    if k < 0 or abs(k * dt - T) > 1e-9 * max(abs(T), dt):
        raise ValueError(f"T={T} is not an integer number of steps of dt={dt}")
    return k


def evolve(state: MapField, T: float, dt: float, snapshot_every: int = 1) -> Trajectory:
    """Repeated wave_step up to time T (a whole number of steps).

    Energies are recorded at every step; states every ``snapshot_every`` steps
    and always at the final time.  Negative T runs backwards with step -dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    k = n_steps(abs(T), dt)
    step = dt if T >= 0 else -dt
    states, e_all = [state], [energy(state)]
    cur = state
    for i in range(1, k + 1):
        cur = wave_step(cur, step)
        e_all.append(energy(cur))
        if i % snapshot_every == 0 or i == k:
            states.append(cur)
    e_all = np.array(e_all)
    step_times = state.t + step * np.arange(k + 1)
    idx = [0] + [i for i in range(1, k + 1) if i % snapshot_every == 0 or i == k]
    return Trajectory(states, step_times[idx], e_all[idx], dt, step_times, e_all)
