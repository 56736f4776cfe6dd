import numpy as np
import pytest

from hyperwave.errors import TailTooLarge
from hyperwave.reconstruct import (coarse_cumulative, cumulative_from_top, reconstruct_A,
                                   reconstruct_map, reconstruct_psi, tail_bound)


def test_trapezoid_from_the_top_is_exact_on_linear_integrands():
    s = np.array([0.0, 0.1, 0.3, 0.35, 0.9])
    f = 2.0 * s + 1.0
    exact = (s[-1] ** 2 + s[-1]) - (s ** 2 + s)
    np.testing.assert_allclose(cumulative_from_top(f, s), exact, atol=1e-14)
    np.testing.assert_allclose(coarse_cumulative(f, s), exact, atol=1e-14)


def test_coarse_rule_differs_on_curved_integrands():
    s = np.linspace(0, 1, 9)
    f = s ** 2
    fine, coarse = cumulative_from_top(f, s), coarse_cumulative(f, s)
    exact = (1 - s ** 3) / 3
    assert np.max(np.abs(coarse - exact)) == pytest.approx(4 * np.max(np.abs(fine - exact)), rel=1e-9)


def test_tail_bound_of_an_exponential_is_its_integral():
    s = np.linspace(0, 2, 11)
    f = 3.0 * np.exp(-1.5 * s)
    bound, mu = tail_bound(f, s, kappa=2.0)
    assert mu == pytest.approx(1.5, rel=1e-12)
    assert bound == pytest.approx(2.0 * 3.0 * np.exp(-3.0) / 1.5, rel=1e-10)
    assert tail_bound(np.zeros(5), s[:5]) == (0.0, float("inf"))
    assert tail_bound(np.exp(s), s)[0] == float("inf")


def test_reconstruction_budget_on_structure_data(triple32):
    fs = triple32["fields"]
    rA, rP = reconstruct_A(fs), reconstruct_psi(fs)
    assert rA.within_budget() and rP.within_budget()
    assert rA.summary()["residual_sup"] == pytest.approx(0.03578122654850269, rel=1e-6)
    assert rP.summary()["residual_sup"] == pytest.approx(0.11972086109604962, rel=1e-6)
    assert rP.extra["Psi_double_integral_gap"] < 0.1 * rP.extra["Psi_norm"]
    assert rA.reconstructed.shape == fs.A[:, :3].shape


def test_tight_tail_tolerance_raises(triple32):
    with pytest.raises(TailTooLarge):
        reconstruct_A(triple32["fields"], tol=1e-14)


def test_map_along_a_geodesic_is_rebuilt_exactly(H):
    """Constant psi_1 = c, psi_2 = 0 and A = 0 integrate to the geodesic exp(x c e_1)."""
    n, h, c = 16, 1 / 16, 0.7
    psi = np.zeros((3, n, n, 2))
    psi[1, ..., 0] = c
    A = np.zeros((3, n, n, 2, 2))
    p0, e0 = H.origin(), H.frame_at(H.origin())
    x = h * np.arange(n)
    exact = H.exp(p0, (c * x)[:, None] * e0[0])
    ref = np.broadcast_to(exact[:, None], (n, n, 3))
    phi, e, rep = reconstruct_map((psi, A), H, h, p0, e0, ref)
    assert rep["path_dependence"] < 1e-12
    assert rep["discrepancy"] < 1e-12
    np.testing.assert_allclose(H.inner(e, phi[..., None, :]), 0.0, atol=1e-13)


def test_map_reconstruction_on_structure_data(triple32):
    lad = triple32["ladders"][1]
    fr = triple32["frames"][1]
    fs = triple32["fields"]
    _, _, rep = reconstruct_map((fs.psi[0], fs.A[0]), lad.target, lad.grid.h,
                                lad.phi[0][0, 0], fr.e[0][0, 0], lad.phi[0])
    assert rep["discrepancy"] < 0.05 and rep["path_dependence"] < 0.05


def test_zero_fields_rebuild_a_constant_map(H):
    n, h = 16, 1 / 16
    p0 = H.exp(H.origin(), np.array([0.0, 0.3, -0.4]))
    e0 = H.frame_at(p0)
    phi, e, rep = reconstruct_map((np.zeros((3, n, n, 2)), np.zeros((3, n, n, 2, 2))), H, h, p0, e0,
                                  np.broadcast_to(p0, (n, n, 3)))
    np.testing.assert_allclose(phi, np.broadcast_to(p0, phi.shape), atol=1e-15)
    np.testing.assert_allclose(e, np.broadcast_to(e0, e.shape), atol=1e-15)
    assert rep["discrepancy"] < 1e-15


def test_reconstructed_connection_is_skew(triple32):
    rec = reconstruct_A(triple32["fields"]).reconstructed
    assert np.array_equal(rec, -np.swapaxes(rec, -1, -2))
