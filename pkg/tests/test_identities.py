import numpy as np
import pytest

from hyperwave.gauge import GaugeFieldSet
from hyperwave.grid import Grid2D
from hyperwave.identities import (cov_laplacian, curvature_residual, d_s, evolution_residuals,
                                  residual, s_torsion_residual, tension_residuals,
                                  torsion_residual, wedge, wedge_apply)

J = np.array([[0.0, -1.0], [1.0, 0.0]])


def synthetic(n=32, K=4, a_amp=0.0, kappa=-1.0):
    """psi_k = d_k f * v with a fixed unit v, A_k = a_k(x) J, on a few identical levels."""
    g = Grid2D(n, 1 / n)
    x = 2 * np.pi * g.coords()
    f = np.sin(x[..., 0]) * np.cos(2 * x[..., 1])
    df = [np.cos(x[..., 0]) * np.cos(2 * x[..., 1]) * 2 * np.pi,
          -2 * np.sin(x[..., 0]) * np.sin(2 * x[..., 1]) * 2 * np.pi]
    v = np.array([0.6, 0.8])
    psi = np.zeros((K + 1, 3, n, n, 2))
    A = np.zeros((K + 1, 3, n, n, 2, 2))
    for j in (1, 2):
        psi[:, j] = (np.roll(f, -1, j - 1) - np.roll(f, 1, j - 1))[..., None] * v / (2 * g.h)
    A[:, 1] = a_amp * (np.sin(x[..., 1]))[..., None, None] * J
    A[:, 2] = a_amp * (np.cos(x[..., 0]))[..., None, None] * J
    s = np.linspace(0, 1e-3, K + 1)
    return GaugeFieldSet(s, g.h, kappa, psi, A, np.zeros((K + 1, n, n, 2))), g, df


def test_residual_norms():
    r = residual("r", np.full((4, 4), -2.0), 0.5)
    assert (r.sup, r.l2) == (2.0, pytest.approx(4.0))
    assert residual("e", np.zeros(0), 0.5).sup == 0.0


def test_wedge_conventions(rng):
    a, b, v = rng.standard_normal((3, 5, 2))
    np.testing.assert_allclose(np.einsum("...ij,...j->...i", wedge(a, b), v), wedge_apply(a, b, v))


def test_gradient_fields_are_torsion_free():
    """Centred differences commute, so psi = grad f * v has zero discrete torsion."""
    fs, _, _ = synthetic()
    assert torsion_residual(fs)["torsion_x1x2"].sup < 1e-10


def test_parallel_fields_need_a_flat_connection():
    fs, _, _ = synthetic(a_amp=0.0)
    cur = curvature_residual(fs)
    assert cur["curvature_x1x2"].sup < 1e-13
    assert cur["commutator_x1x2"].sup == 0.0


def test_abelian_curvature_matches_the_analytic_derivative():
    """A = a_k J: F_12 = (d1 a2 - d2 a1) J; with parallel psi the residual is F itself."""
    errs = []
    for n in (32, 64):
        fs, g, _ = synthetic(n=n, a_amp=0.5)
        x = 2 * np.pi * g.coords()
        exact = 0.5 * 2 * np.pi * (-np.sin(x[..., 0]) - np.cos(x[..., 1]))
        F = curvature_residual(fs)["curvature_x1x2"].sup
        errs.append(abs(F - np.max(np.abs(exact))))
        assert curvature_residual(fs)["commutator_x1x2"].sup == 0.0
    assert errs[1] < errs[0] / 3.5


def test_heat_tension_is_the_covariant_divergence():
    """With A = 0 and psi_s set to the discrete Laplacian of f, the check is exact."""
    fs, g, _ = synthetic()
    lap = cov_laplacian(np.zeros_like(fs.psi[0, 1]), fs.A[0], g.h)
    assert np.all(lap == 0)
    psi_s = (np.roll(fs.psi[:, 1], -1, 1) - np.roll(fs.psi[:, 1], 1, 1)
             + np.roll(fs.psi[:, 2], -1, 2) - np.roll(fs.psi[:, 2], 1, 2)) / (2 * g.h)
    fs.psi_s[:] = psi_s
    assert tension_residuals(fs)["heat_tension"].sup < 1e-9


def test_s_derivative_is_exact_on_quadratics():
    s = np.array([0.0, 0.1, 0.25, 0.6])
    f = 3 * s ** 2 - s + 2
    for k in (1, 2):
        assert d_s(f, s, k) == pytest.approx(6 * s[k] - 1, rel=1e-12)


def test_frozen_structure_residuals(triple32):
    fs = triple32["fields"]
    tor, cur = torsion_residual(fs), curvature_residual(fs)
    assert tor["torsion_x1x2"].sup == pytest.approx(0.8692465503092315, rel=1e-8)
    assert cur["curvature_x1x2"].sup == pytest.approx(0.7986364538385011, rel=1e-8)
    assert tension_residuals(fs)["heat_tension"].sup == pytest.approx(11.385733375510654, rel=1e-8)
    for tag in ("x1x2", "tx1", "tx2"):
        assert cur[f"commutator_{tag}"].sup == 0.0


def test_evolution_residuals_are_finite_and_a_wrong_curvature_is_detected(triple32):
    fs = triple32["fields"]
    good = evolution_residuals(fs)
    assert set(good) == {"psi_t", "psi_x1", "psi_x2", "psi_s", "u_heat", "psi_s_wave"}
    assert all(np.isfinite(r.sup) for r in good.values())
    assert np.isfinite(s_torsion_residual(fs).sup)
    from dataclasses import replace
    bad = curvature_residual(replace(fs, kappa=-4.0))["curvature_x1x2"].sup
    assert bad > 10 * curvature_residual(fs)["curvature_x1x2"].sup
