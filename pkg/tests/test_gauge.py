import numpy as np
import pytest

from hyperwave.errors import GridMismatch, NotOrthogonal
from hyperwave.gauge import (extract_fields, gauge_transform, overlap, random_rotation,
                             rotate_frames, transport_frame)
from hyperwave.grid import Grid2D
from hyperwave.heat import HeatConfig, build_ladder
from hyperwave.identities import curvature_norm
from hyperwave.wave import bump, energy, geodesic_data

from conftest import structure_state


@pytest.fixture(scope="module")
def geodesic_frames(H):
    """A map into a single geodesic: its image is one-dimensional."""
    g = Grid2D(32, 1 / 32)
    x = g.coords()
    u0 = 0.8 * bump(np.sum((x - 0.5) ** 2, -1), 0.3)
    st = geodesic_data(g, H, u0, np.zeros_like(u0), direction=[0.6, 0.8])
    return transport_frame(build_ladder(st))


def test_geodesic_image_has_a_flat_connection(geodesic_frames):
    """Frames transported along one geodesic are parallel, so A vanishes identically."""
    fs = extract_fields(geodesic_frames)
    assert np.max(np.abs(fs.A)) < 1e-12
    # psi points along the (fixed) geodesic direction in every frame
    psi = fs.psi[0, 1].reshape(-1, 2)
    big = np.linalg.norm(psi, axis=1) > 1e-3
    unit = psi[big] / np.linalg.norm(psi[big], axis=1)[:, None]
    assert np.max(np.abs(np.abs(unit @ unit[0]) - 1.0)) < 1e-12


def test_frames_are_orthonormal_and_tangent(triple32, H):
    fr = triple32["frames"][1]
    assert fr.orthonormality_defect() < 1e-13
    phi = fr.ladder.phi
    assert np.max(np.abs(H.inner(fr.e, phi[..., None, :]))) < 1e-13


def test_connection_is_exactly_skew(triple32):
    A = triple32["fields"].A
    assert np.array_equal(A, -np.swapaxes(A, -1, -2))


def test_transport_residual_obeys_the_curvature_bound(triple32):
    fr = triple32["frames"][1]
    assert np.all(fr.transport_residual <= fr.transport_bound() + 1e-12)
    assert fr.transport_constant() > 0


def test_energy_is_half_the_squared_field(triple32):
    fs, traj = triple32["fields"], triple32["traj"]
    e = 0.5 * np.sum(fs.psi[0] ** 2) * fs.h ** 2
    assert e == pytest.approx(energy(traj.states[1]), rel=1e-12)


def test_seed_rotation_rotates_the_fields(triple32, rng):
    fr = triple32["frames"][1]
    U = random_rotation(2, rng)
    rotated = transport_frame(fr.ladder, U @ fr.e_seed)
    fs, fs2 = extract_fields(fr), extract_fields(rotated)
    np.testing.assert_allclose(fs2.psi, np.einsum("ij,...j->...i", U, fs.psi), atol=1e-12)
    np.testing.assert_allclose(fs2.A, U @ fs.A @ U.T, atol=1e-10)


def test_constant_rotation_leaves_gauge_invariants_unchanged(triple32, rng):
    minus, mid, plus = triple32["frames"]
    fs = triple32["fields"]
    fs2, _ = gauge_transform(mid, random_rotation(2, rng), minus, plus, triple32["dt"])
    np.testing.assert_allclose(fs2.norms(), fs.norms(), atol=1e-12)
    F1, F2 = curvature_norm(fs), curvature_norm(fs2)
    assert set(F1) == {(0, 1), (0, 2), (1, 2)}
    for key in F1:
        assert np.max(np.abs(F1[key] - F2[key])) < 1e-12


def test_smooth_rotation_field(triple32):
    """|psi| stays exact; the discrete curvature is covariant only up to O(h^2)."""
    minus, mid, plus = triple32["frames"]
    fs = triple32["fields"]
    x = mid.ladder.grid.coords()
    th = 0.7 * np.sin(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1])
    U = np.stack([np.stack([np.cos(th), -np.sin(th)], -1),
                  np.stack([np.sin(th), np.cos(th)], -1)], -2)
    fs2, _ = gauge_transform(mid, U, minus, plus, triple32["dt"])
    np.testing.assert_allclose(fs2.norms(), fs.norms(), atol=1e-12)
    np.testing.assert_allclose(fs2.psi_s, np.einsum("xyij,kxyj->kxyi", U, fs.psi_s), atol=1e-12)
    F1, F2 = curvature_norm(fs), curvature_norm(fs2)
    for key in F1:
        assert np.max(np.abs(F1[key] - F2[key])) < 0.03 * np.max(F1[key])


def test_rotations_compose(triple32, rng):
    fr = triple32["frames"][1]
    U, V = random_rotation(2, rng), random_rotation(2, rng)
    a = rotate_frames(rotate_frames(fr, U), V)
    b = rotate_frames(fr, V @ U)
    np.testing.assert_allclose(a.e, b.e, atol=1e-14)


def test_random_rotation_is_special_orthogonal(rng):
    for m in (2, 3, 5):
        Q = random_rotation(m, rng)
        np.testing.assert_allclose(Q @ Q.T, np.eye(m), atol=1e-14)
        assert np.linalg.det(Q) == pytest.approx(1.0)


def test_invalid_gauges_and_mismatched_ladders(triple32):
    minus, mid, plus = triple32["frames"]
    with pytest.raises(NotOrthogonal):
        rotate_frames(mid, np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(NotOrthogonal):
        rotate_frames(mid, np.eye(3))
    with pytest.raises(GridMismatch):
        extract_fields(mid, minus, None, 0.1)
    other = transport_frame(build_ladder(structure_state(32), HeatConfig(ratio=1.1)))
    with pytest.raises(GridMismatch):
        extract_fields(mid, minus, other, 0.1)
    with pytest.raises(GridMismatch):
        extract_fields(mid).t_derivative("psi")


def test_overlap_of_a_frame_with_itself_is_the_identity(triple32):
    e = triple32["frames"][1].e[0]
    np.testing.assert_allclose(overlap(e, e), np.broadcast_to(np.eye(2), e.shape[:-2] + (2, 2)),
                               atol=1e-13)


def test_constant_data_keep_the_seed_frame(H):
    from hyperwave.wave import DataSpec, make_initial_data
    st = make_initial_data(Grid2D(32, 1 / 32), H, DataSpec(amplitude=0.0))
    fr = transport_frame(build_ladder(st))
    np.testing.assert_allclose(fr.e, np.broadcast_to(fr.e_seed, fr.e.shape), atol=1e-15)
    fs = extract_fields(fr)
    assert np.max(np.abs(fs.psi)) == 0.0
    assert np.max(np.abs(fs.A)) == 0.0


def test_identity_rotation_is_a_fixed_point(triple32):
    minus, mid, plus = triple32["frames"]
    fs = triple32["fields"]
    fs2, _ = gauge_transform(mid, np.eye(2), minus, plus, triple32["dt"])
    np.testing.assert_array_equal(fs2.psi, fs.psi)
    np.testing.assert_array_equal(fs2.A, fs.A)


def test_torsion_norm_is_gauge_invariant(triple32, rng):
    from hyperwave.identities import torsion_fields
    minus, mid, plus = triple32["frames"]
    fs2, _ = gauge_transform(mid, random_rotation(2, rng), minus, plus, triple32["dt"])
    T1, T2 = torsion_fields(triple32["fields"]), torsion_fields(fs2)
    for key in T1:
        np.testing.assert_allclose(np.linalg.norm(T2[key], axis=-1),
                                   np.linalg.norm(T1[key], axis=-1), atol=1e-10)
