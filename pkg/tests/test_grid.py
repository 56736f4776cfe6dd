import numpy as np
import pytest

from hyperwave.errors import ShapeMismatch, SnapshotFormatError
from hyperwave.geometry import Hyperboloid
from hyperwave.grid import (FieldKind, Grid2D, MapField, central_diff, integrate, laplacian,
                            prolong, read_csv, read_mapfield, read_snapshot, restrict,
                            second_diff, write_csv, write_mapfield, write_snapshot)


def wave(grid, k=(1, 2)):
    x = grid.coords()
    return np.sin(2 * np.pi * (k[0] * x[..., 0] + k[1] * x[..., 1]) / grid.L)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid2D(24, 0.1)
    with pytest.raises(ValueError):
        Grid2D(8, 0.1)
    g = Grid2D.from_extent(32, 2.0)
    assert g.h == 2.0 / 32 and g.refined() == Grid2D(64, 1.0 / 32)


def test_minimal_image_coordinates():
    g = Grid2D(16, 1 / 16)
    d = g.relative_coords((0.0, 0.0))
    assert np.all(np.abs(d) <= 0.5)
    assert d[15, 0, 0] == pytest.approx(-1 / 16)


def test_central_stencils_are_second_order():
    errs = []
    for n in (32, 64):
        g = Grid2D(n, 1.0 / n)
        f = wave(g)
        exact = 2 * np.pi * np.cos(2 * np.pi * (g.coords()[..., 0] + 2 * g.coords()[..., 1]))
        errs.append(np.max(np.abs(central_diff(f, 0, g.h) - exact)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_laplacian_is_sum_of_second_differences_and_exact_eigenvalue():
    g = Grid2D(32, 1 / 32)
    f = wave(g, (3, 1))
    lap = laplacian(f, g.h)
    np.testing.assert_allclose(lap, second_diff(f, 0, g.h) + second_diff(f, 1, g.h), atol=1e-9)
    # discrete symbol of the five-point stencil
    sym = sum(-4 / g.h ** 2 * np.sin(np.pi * k * g.h) ** 2 for k in (3, 1))
    np.testing.assert_allclose(lap, sym * f, atol=1e-8)


def test_integrate_uses_cell_area():
    g = Grid2D(16, 0.25)
    assert integrate(np.ones((16, 16)), g.h) == pytest.approx(16.0)


def test_restrict_prolong():
    g = Grid2D(32, 1 / 32)
    f = wave(g)
    np.testing.assert_allclose(restrict(prolong(f)), f, atol=1e-14)
    with pytest.raises(ShapeMismatch):
        restrict(np.zeros((15, 15)))


def test_snapshot_round_trip(tmp_path):
    H = Hyperboloid(2)
    g = Grid2D(16, 1 / 16)
    phi = np.broadcast_to(H.origin(), (16, 16, 3)).copy()
    state = MapField(g, H, phi, np.zeros_like(phi), t=0.375)
    write_mapfield(tmp_path / "a.cwm", state, s=0.5)
    back = read_mapfield(tmp_path / "a.cwm")
    np.testing.assert_array_equal(back.phi, phi)
    assert back.t == 0.375 and back.grid == g
    vals = np.arange(16 * 16 * 2, dtype=float).reshape(16, 16, 2)
    write_snapshot(tmp_path / "v.cwm", vals, FieldKind.VECTOR, g, H, 1.0, 2.0)
    snap = read_snapshot(tmp_path / "v.cwm")
    assert snap.kind == FieldKind.VECTOR and snap.s == 2.0
    np.testing.assert_array_equal(snap.values, vals)
    (tmp_path / "bad.cwm").write_bytes(b"XXXX" + bytes(60))
    with pytest.raises(SnapshotFormatError):
        read_snapshot(tmp_path / "bad.cwm")


def test_csv_round_trip(tmp_path):
    g = Grid2D(16, 1 / 16)
    vals = np.random.default_rng(0).standard_normal((16, 16, 3))
    write_csv(tmp_path / "f.csv", vals, g, ["a", "b", "c"])
    np.testing.assert_array_equal(read_csv(tmp_path / "f.csv", g), vals)


def test_mapfield_rejects_wrong_shapes():
    H = Hyperboloid(2)
    g = Grid2D(16, 1 / 16)
    with pytest.raises(ShapeMismatch):
        MapField(g, H, np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_constant_fields_have_zero_derivatives_and_integrate_to_area():
    g = Grid2D(16, 0.1)
    c = np.full((16, 16), 2.5)
    assert np.all(central_diff(c, 0, g.h) == 0) and np.all(laplacian(c, g.h) == 0)
    assert integrate(c, g.h) == pytest.approx(2.5 * g.L ** 2)


def test_periodic_sums_vanish():
    g = Grid2D(32, 1 / 32)
    f = np.random.default_rng(1).standard_normal((32, 32))
    assert abs(np.sum(laplacian(f, g.h))) < 1e-9
    assert abs(integrate(wave(g, (2, 3)), g.h)) < 1e-15


def test_bump_quadrature_is_spectrally_accurate():
    """A Gaussian well inside the box: h^2 sum matches the exact integral to 1e-8."""
    g = Grid2D(64, 1 / 64)
    r2 = np.sum(g.relative_coords((0.5, 0.5)) ** 2, -1)
    s = 0.08
    assert integrate(np.exp(-r2 / (2 * s * s)), g.h) == pytest.approx(2 * np.pi * s * s, abs=1e-8)


def test_prolongation_is_second_order_and_stays_on_the_sheet():
    from hyperwave.geometry import Hyperboloid
    from hyperwave.grid import prolong_map, restrict_map
    errs = []
    for n in (32, 64):
        g = Grid2D(n, 1 / n)
        fine = g.refined()
        errs.append(np.max(np.abs(prolong(wave(g)) - wave(fine))))
    assert np.log2(errs[0] / errs[1]) > 1.9
    H = Hyperboloid(2)
    g = Grid2D(32, 1 / 32)
    v = np.zeros((32, 32, 3))
    v[..., 1] = wave(g)
    phi = H.exp(H.origin(), v)
    st = MapField(g, H, phi, np.zeros_like(phi))
    up = prolong_map(st)
    assert max(up.invariant_residuals()) < 1e-13
    np.testing.assert_allclose(restrict_map(up).phi, phi, rtol=0, atol=1e-14)
