import numpy as np
import pytest

from textmotion.errors import Degenerate6DError, InvalidRotationError
from textmotion.rotations import (identity_rot6d, matrix_from_axis_angle,
                                  matrix_from_rot6d, mirror_matrix,
                                  mirror_rot6d, random_rotations,
                                  rot6d_from_matrix)


def test_identity_encodes_to_canonical_vector():
    v = rot6d_from_matrix(np.eye(3))
    np.testing.assert_allclose(v, [1, 0, 0, 0, 1, 0], atol=1e-12)


def test_quarter_turn_about_z_encoding():
    R = matrix_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    v = rot6d_from_matrix(R)
    np.testing.assert_allclose(v, [0, 1, 0, -1, 0, 0], atol=1e-12)


def test_gram_schmidt_fixes_shear():
    R = matrix_from_rot6d(np.array([1.0, 0, 0, 1.0, 1.0, 0]))
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)


def test_gram_schmidt_drops_scale():
    R = matrix_from_rot6d(np.array([2.0, 0, 0, 0, 3.0, 0]))
    np.testing.assert_allclose(R, np.eye(3), atol=1e-12)


def test_round_trip_over_random_rotations():
    rng = np.random.default_rng(0)
    R = random_rotations(1000, rng)
    back = matrix_from_rot6d(rot6d_from_matrix(R))
    assert np.max(np.abs(back - R)) < 1e-6


def test_decode_always_orthonormal():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(500, 6))
    # keep the two columns well conditioned
    keep = np.abs(np.linalg.norm(np.cross(v[:, :3], v[:, 3:]), axis=-1)) > 1e-3
    R = matrix_from_rot6d(v[keep])
    eye = np.einsum("nij,nkj->nik", R, R)
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(3), eye.shape), atol=1e-10)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-10)


def test_degenerate_vector_rejected():
    with pytest.raises(Degenerate6DError):
        matrix_from_rot6d(np.zeros(6))
    with pytest.raises(Degenerate6DError):
        # second column parallel to the first
        matrix_from_rot6d(np.array([1.0, 0, 0, 2.0, 0, 0]))


def test_non_orthonormal_matrix_rejected():
    M = np.eye(3)
    M[0, 1] = 0.01
    with pytest.raises(InvalidRotationError):
        rot6d_from_matrix(M)


def test_reflection_rejected():
    S = np.diag([-1.0, 1.0, 1.0])
    with pytest.raises(InvalidRotationError):
        rot6d_from_matrix(S)


def test_mirror_is_involution():
    rng = np.random.default_rng(2)
    R = random_rotations(200, rng)
    np.testing.assert_allclose(mirror_matrix(mirror_matrix(R)), R, atol=1e-12)
    v = rot6d_from_matrix(R)
    np.testing.assert_allclose(mirror_rot6d(mirror_rot6d(v)), v, atol=1e-12)


def test_mirror_vector_matches_matrix_conjugation():
    rng = np.random.default_rng(3)
    R = random_rotations(200, rng)
    via_matrix = rot6d_from_matrix(mirror_matrix(R))
    via_signs = mirror_rot6d(rot6d_from_matrix(R))
    np.testing.assert_allclose(via_signs, via_matrix, atol=1e-12)


def test_identity_rot6d_shape():
    v = identity_rot6d((4, 21))
    assert v.shape == (4, 21, 6)
    np.testing.assert_allclose(v[0, 0], [1, 0, 0, 0, 1, 0])
