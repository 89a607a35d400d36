"""Rotation math: continuous 6D representation, matrices, axis-angle.

The 6D form stores the first two columns of a rotation matrix,
column-major: v = [R00, R10, R20, R01, R11, R21].  Gram-Schmidt
completion recovers the full matrix, so the representation is continuous
and scale-invariant.

All functions accept stacked inputs (leading batch dimensions).
"""
from __future__ import annotations

import numpy as np

from .errors import Degenerate6DError, InvalidRotationError

_DEGENERATE_NORM = 1e-8
_ORTHO_TOL = 1e-4


def rot6d_from_matrix(R: np.ndarray) -> np.ndarray:
    """First two columns of R, concatenated column-major.

    Raises InvalidRotationError if R is not orthonormal with det +1
    (Frobenius deviation above 1e-4).
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise InvalidRotationError(f"expected (..,3,3) matrix, got {R.shape}")
    eye = np.eye(3)
    gram_dev = np.linalg.norm(
        np.swapaxes(R, -1, -2) @ R - eye, axis=(-2, -1))
    if np.any(gram_dev > _ORTHO_TOL):
        raise InvalidRotationError(
            f"matrix not orthonormal (max deviation {gram_dev.max():.2e})")
    if np.any(np.linalg.det(R) < 0.0):
        raise InvalidRotationError("matrix has negative determinant")
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def matrix_from_rot6d(v: np.ndarray) -> np.ndarray:
    """Gram-Schmidt completion of a 6D rotation vector.

    a = normalize(v[:3]); b = normalize(v[3:] - (a.v[3:])a); c = a x b;
    columns [a, b, c].  Degenerate inputs (near-zero first half, or
    second half parallel to the first) raise Degenerate6DError.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 6:
        raise Degenerate6DError(f"expected (..,6) vector, got {v.shape}")
    a_raw = v[..., 0:3]
    b_raw = v[..., 3:6]
    a_norm = np.linalg.norm(a_raw, axis=-1, keepdims=True)
    if np.any(a_norm <= _DEGENERATE_NORM):
        raise Degenerate6DError("first 3-vector has near-zero norm")
    a = a_raw / a_norm
    b_res = b_raw - np.sum(a * b_raw, axis=-1, keepdims=True) * a
    b_norm = np.linalg.norm(b_res, axis=-1, keepdims=True)
    if np.any(b_norm <= _DEGENERATE_NORM):
        raise Degenerate6DError("second 3-vector parallel to the first")
    b = b_res / b_norm
    c = np.cross(a, b)
    return np.stack([a, b, c], axis=-1)


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from (w,x,y,z) quaternion(s); normalizes input."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation about `axis` (normalized here) by `angle` rad."""
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    R = np.empty(np.broadcast(x, angle).shape + (3, 3))
    R[..., 0, 0] = c + x * x * C
    R[..., 0, 1] = x * y * C - z * s
    R[..., 0, 2] = x * z * C + y * s
    R[..., 1, 0] = y * x * C + z * s
    R[..., 1, 1] = c + y * y * C
    R[..., 1, 2] = y * z * C - x * s
    R[..., 2, 0] = z * x * C - y * s
    R[..., 2, 1] = z * y * C + x * s
    R[..., 2, 2] = c + z * z * C
    return R


def random_rotations(n: int, rng: np.random.Generator) -> np.ndarray:
    """n uniform random rotation matrices via normalized quaternions."""
    q = rng.normal(size=(n, 4))
    return matrix_from_quat(q)


def identity_rot6d(shape=()) -> np.ndarray:
    v = np.zeros(shape + (6,))
    v[..., 0] = 1.0
    v[..., 4] = 1.0
    return v


def renormalize_rot6d(v: np.ndarray) -> np.ndarray:
    """Snap (e.g. interpolated) 6D blocks back onto the manifold."""
    return rot6d_from_matrix(matrix_from_rot6d(v))


# Sagittal reflection (flip x).  Conjugating a rotation by it mirrors the
# rotation across the y-z plane and keeps det = +1.
MIRROR_REFLECTION = np.diag([-1.0, 1.0, 1.0])


def mirror_matrix(R: np.ndarray) -> np.ndarray:
    return MIRROR_REFLECTION @ R @ MIRROR_REFLECTION


def mirror_rot6d(v: np.ndarray) -> np.ndarray:
    """Mirror of a 6D rotation.

    Conjugation by diag(-1,1,1) acts on the stored columns as a fixed
    sign pattern, so this is linear in the channels:
    [x0,y0,z0,x1,y1,z1] -> [x0,-y0,-z0,-x1,y1,z1].
    """
    v = np.asarray(v, dtype=np.float64)
    out = v.copy()
    out[..., 1] = -v[..., 1]
    out[..., 2] = -v[..., 2]
    out[..., 3] = -v[..., 3]
    return out


ROT6D_MIRROR_SIGNS = np.array([1.0, -1.0, -1.0, -1.0, 1.0, 1.0])
