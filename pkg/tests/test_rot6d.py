"""Rotation-representation algebra: roundtrips, Jacobians, geodesic angle."""

import numpy as np
import pytest

from poseguide import rot6d


def random_rotations(n, seed=0):
    """Uniform-ish random rotation matrices via QR with sign fix."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, 3, 3)))
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    q = q * d[:, None, :]
    det = np.linalg.det(q)
    q[det < 0, :, 2] *= -1.0
    return q


def test_roundtrip_identity():
    R = random_rotations(10_000, seed=1)
    back = rot6d.batch_from_sixdof(rot6d.to_sixdof(R))
    assert np.abs(back - R).max() < 1e-9


def test_decoded_frames_are_rotations():
    rng = np.random.default_rng(2)
    r = rng.standard_normal((5000, 6))
    R = rot6d.batch_from_sixdof(r)
    eye = np.einsum("nij,nkj->nik", R, R)
    assert np.abs(eye - np.eye(3)).max() < 1e-9
    assert np.abs(np.linalg.det(R) - 1.0).max() < 1e-9


def test_sixdof_layout_is_first_two_columns():
    R = random_rotations(1, seed=3)[0]
    r = rot6d.to_sixdof(R)
    assert np.allclose(r[:3], R[:, 0])
    assert np.allclose(r[3:], R[:, 1])


def test_vec9_column_stacking_and_inverse():
    R = random_rotations(7, seed=4)
    v = rot6d.vec9(R)
    assert v.shape == (7, 9)
    assert np.allclose(v[:, 0:3], R[:, :, 0])
    assert np.allclose(v[:, 3:6], R[:, :, 1])
    assert np.allclose(v[:, 6:9], R[:, :, 2])
    assert np.allclose(rot6d.unvec9(v), R)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(5)
    step = 1e-6
    for trial in range(50):
        r = rng.standard_normal(6) * rng.uniform(0.5, 2.0)
        J = rot6d.jacobian_from_sixdof(r)
        assert J.shape == (9, 6)
        fd = np.zeros((9, 6))
        for k in range(6):
            hi, lo = r.copy(), r.copy()
            hi[k] += step
            lo[k] -= step
            fd[:, k] = (rot6d.vec9(rot6d.from_sixdof(hi))
                        - rot6d.vec9(rot6d.from_sixdof(lo))) / (2 * step)
        assert np.abs(J - fd).max() < 1e-5


def test_vjp_matches_jacobian_transpose():
    rng = np.random.default_rng(6)
    r = rng.standard_normal((4, 3, 6))
    cot = rng.standard_normal((4, 3, 9))
    got = rot6d.vjp_from_sixdof(r, cot)
    for i in range(4):
        for j in range(3):
            J = rot6d.jacobian_from_sixdof(r[i, j])
            assert np.allclose(got[i, j], J.T @ cot[i, j], atol=1e-12)


def test_degenerate_inputs_raise():
    with pytest.raises(rot6d.DegenerateRotationError):
        rot6d.from_sixdof(np.zeros(6))
    # parallel columns
    with pytest.raises(rot6d.DegenerateRotationError):
        rot6d.from_sixdof(np.array([1.0, 0, 0, 2.0, 0, 0]))


def test_decode_invariant_to_column_scaling():
    rng = np.random.default_rng(7)
    r = rng.standard_normal(6)
    R0 = rot6d.from_sixdof(r)
    s = r.copy()
    s[:3] *= 3.7  # scaling the first column does not move the frame
    assert np.allclose(rot6d.from_sixdof(s), R0, atol=1e-12)


def test_geodesic_angle_known_values():
    R = np.eye(3)
    assert rot6d.geodesic_angle(R, R) == pytest.approx(0.0, abs=1e-9)
    # rotate 90 degrees about z
    Rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert rot6d.geodesic_angle(R, Rz) == pytest.approx(90.0, abs=1e-9)


def test_geodesic_angle_matches_axis_angle():
    rng = np.random.default_rng(8)
    for trial in range(100):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        theta = rng.uniform(0.01, np.pi - 0.01)
        K = np.array([[0, -axis[2], axis[1]],
                      [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
        Rab = np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)
        base = random_rotations(1, seed=trial)[0]
        got = rot6d.geodesic_angle(base, base @ Rab)
        assert got == pytest.approx(np.degrees(theta), abs=1e-7)
