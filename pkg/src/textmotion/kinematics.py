"""Forward kinematics, root-trajectory integration, and two-bone leg IK."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .pose import ROOT_SLICE, ROT_SLICE, POS_SLICE, body_positions
from .rotations import matrix_from_rot6d
from .skeleton import LEFT_LEG, N_BODY_JOINTS, RIGHT_LEG, Skeleton


def yaw_matrices(theta: np.ndarray) -> np.ndarray:
    """Rotation about +y by theta; (T,) -> (T, 3, 3)."""
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 2] = s
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = -s
    out[..., 2, 2] = c
    return out


def integrate_root(root: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrate per-frame root channels into a world trajectory.

    root: (T, 4) = (yaw rate rad/frame, x vel, z vel, height), velocities
    expressed in the yaw-aligned frame of the emitting frame.  Returns
    (yaw (T,), pelvis position (T, 3)); frame 0 starts at the origin
    facing forward.
    """
    root = np.asarray(root, dtype=np.float64)
    if root.ndim != 2 or root.shape[1] != 4:
        raise ShapeMismatchError(f"root must be (T,4), got {root.shape}")
    T = root.shape[0]
    yaw = np.zeros(T)
    yaw[1:] = np.cumsum(root[:-1, 0])
    pos = np.zeros((T, 3))
    R = yaw_matrices(yaw[:-1])
    step = np.zeros((T - 1, 3))
    step[:, 0] = root[:-1, 1]
    step[:, 2] = root[:-1, 2]
    world_step = np.einsum("tij,tj->ti", R, step)
    pos[1:, 0] = np.cumsum(world_step[:, 0])
    pos[1:, 2] = np.cumsum(world_step[:, 2])
    pos[:, 1] = root[:, 3]
    return yaw, pos


def root_channels_from_trajectory(yaw: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Inverse of integrate_root; last frame repeats the previous velocity."""
    yaw = np.asarray(yaw, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.float64)
    T = yaw.shape[0]
    root = np.zeros((T, 4))
    dyaw = np.diff(yaw)
    dpos = np.diff(pos[:, [0, 2]], axis=0)  # world-frame horizontal steps
    R = yaw_matrices(yaw[:-1])
    # rotate world steps back into the emitting frame
    local = np.stack([
        R[:, 0, 0] * dpos[:, 0] + R[:, 2, 0] * dpos[:, 1],
        R[:, 0, 2] * dpos[:, 0] + R[:, 2, 2] * dpos[:, 1],
    ], axis=-1)
    root[:-1, 0] = dyaw
    root[:-1, 1:3] = local
    if T > 1:
        root[-1, :3] = root[-2, :3]
    root[:, 3] = pos[:, 1]
    return root


def to_world(local_pos: np.ndarray, yaw: np.ndarray, pelvis_pos: np.ndarray) -> np.ndarray:
    """Map yaw-aligned root-frame positions (heights absolute) to world."""
    R = yaw_matrices(yaw)
    out = np.einsum("tij,tnj->tni", R, np.asarray(local_pos, dtype=np.float64))
    out[..., 0] += pelvis_pos[:, None, 0]
    out[..., 2] += pelvis_pos[:, None, 2]
    return out


def to_root_frame(world_pos: np.ndarray, yaw: np.ndarray, pelvis_pos: np.ndarray) -> np.ndarray:
    R = yaw_matrices(-np.asarray(yaw))
    shifted = np.array(world_pos, dtype=np.float64, copy=True)
    shifted[..., 0] -= pelvis_pos[:, None, 0]
    shifted[..., 2] -= pelvis_pos[:, None, 2]
    return np.einsum("tij,tnj->tni", R, shifted)


def fk(skeleton: Skeleton, local_rot: np.ndarray, yaw: np.ndarray,
       pelvis_pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World positions and rotations from per-joint local rotations.

    local_rot: (T, J, 3, 3).  Parentless joints hang off a virtual pelvis
    whose world transform is (yaw rotation, pelvis_pos).
    Returns (positions (T, J, 3), rotations (T, J, 3, 3)).
    """
    local_rot = np.asarray(local_rot, dtype=np.float64)
    T, J = local_rot.shape[:2]
    if J != len(skeleton.parents):
        raise ShapeMismatchError(f"{J} rotations for {len(skeleton.parents)} joints")
    R_pelvis = yaw_matrices(yaw)
    pos = np.zeros((T, J, 3))
    rot = np.zeros((T, J, 3, 3))
    for j, parent in enumerate(skeleton.parents):
        if parent < 0:
            base_rot, base_pos = R_pelvis, pelvis_pos
        else:
            base_rot, base_pos = rot[:, parent], pos[:, parent]
        rot[:, j] = np.einsum("tij,tjk->tik", base_rot, local_rot[:, j])
        pos[:, j] = base_pos + np.einsum("tij,j->ti", base_rot, skeleton.offsets[j])
    return pos, rot


def _unit(v, eps=1e-12):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, eps)


def _frame(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Orthonormal frame with columns (u, v, u x v); u, v unit and orthogonal."""
    return np.stack([u, v, np.cross(u, v)], axis=-1)


@dataclass
class LegIKResult:
    hip_local: np.ndarray    # (T, 3, 3)
    knee_local: np.ndarray   # (T, 3, 3)
    ankle_pos: np.ndarray    # (T, 3) achieved ankle position
    knee_pos: np.ndarray     # (T, 3)
    clamped: np.ndarray      # (T,) bool, target out of reach


def solve_leg_ik(skeleton: Skeleton, side: str, pelvis_rot: np.ndarray,
                 pelvis_pos: np.ndarray, ankle_target: np.ndarray,
                 knee_hint: np.ndarray) -> LegIKResult:
    """Two-bone analytic IK for one leg.

    The hip is a ball joint, the knee a hinge; the bend plane is pinned
    by `knee_hint`.  Targets beyond the reachable annulus are clamped to
    it and flagged.  Hinge-axis sign follows the hint, so the returned
    knee_local is always a rotation about the joint's local x axis.
    """
    leg = {"left": LEFT_LEG, "right": RIGHT_LEG}[side]
    off_knee = skeleton.offsets[leg["knee"]]
    off_ankle = skeleton.offsets[leg["ankle"]]
    L1 = float(np.linalg.norm(off_knee))
    L2 = float(np.linalg.norm(off_ankle))
    t_rest = off_knee / L1
    s_rest = off_ankle / L2
    x_rest = np.array([1.0, 0.0, 0.0])
    F_rest_hip = _frame(x_rest, t_rest)
    F_rest_knee = _frame(x_rest, s_rest)

    pelvis_rot = np.asarray(pelvis_rot, dtype=np.float64)
    pelvis_pos = np.asarray(pelvis_pos, dtype=np.float64)
    p_H = pelvis_pos + pelvis_rot @ skeleton.offsets[leg["hip"]]

    to_target = np.asarray(ankle_target, dtype=np.float64) - p_H
    d_raw = np.linalg.norm(to_target, axis=-1)
    d = np.clip(d_raw, abs(L1 - L2) + 1e-9, L1 + L2)
    clamped = (d_raw > L1 + L2 + 1e-9) | (d_raw < abs(L1 - L2) - 1e-9)
    a_hat = _unit(to_target)

    # bend direction: hint component orthogonal to the hip->target line
    hint_vec = np.asarray(knee_hint, dtype=np.float64) - p_H
    m = hint_vec - np.sum(hint_vec * a_hat, axis=-1, keepdims=True) * a_hat
    degenerate = np.linalg.norm(m, axis=-1) < 1e-8
    if np.any(degenerate):
        fwd = pelvis_rot @ np.array([0.0, 0.0, 1.0])
        fwd = fwd - np.sum(fwd * a_hat, axis=-1, keepdims=True) * a_hat
        m = np.where(degenerate[..., None], fwd, m)
    m_hat = _unit(m)
    n_hat = _unit(np.cross(a_hat, m_hat))

    cos_hip = np.clip((L1 ** 2 + d ** 2 - L2 ** 2) / (2.0 * L1 * d), -1.0, 1.0)
    sin_hip = np.sqrt(np.maximum(0.0, 1.0 - cos_hip ** 2))
    k_dir = cos_hip[..., None] * a_hat + sin_hip[..., None] * m_hat
    p_K = p_H + L1 * k_dir
    p_A = p_H + d[..., None] * a_hat
    s_hat = _unit(p_A - p_K)

    R_hip_w = _frame(n_hat, k_dir) @ F_rest_hip.T
    R_knee_w = _frame(n_hat, s_hat) @ F_rest_knee.T
    hip_local = np.swapaxes(pelvis_rot, -1, -2) @ R_hip_w
    knee_local = np.swapaxes(R_hip_w, -1, -2) @ R_knee_w
    return LegIKResult(hip_local=hip_local, knee_local=knee_local,
                       ankle_pos=p_A, knee_pos=p_K, clamped=clamped)


@dataclass
class VisualPose:
    """World-space reconstruction of a body track for rendering."""

    positions: np.ndarray   # (T, 21, 3)
    rotations: np.ndarray   # (T, 21, 3, 3)
    yaw: np.ndarray         # (T,)
    pelvis_pos: np.ndarray  # (T, 3)
    ik_clamped: np.ndarray  # (T, 2) left/right reach-clamp flags


def compose_visual_pose(body: np.ndarray, skeleton: Skeleton) -> VisualPose:
    """Assemble display joints from a (T, 260) body channel array.

    The root trajectory is integrated from the root channels, the upper
    body follows the predicted joint rotations, and each leg is re-solved
    with IK so the ankles land on the predicted ankle positions (knees
    pinned near their predicted positions).  This keeps feet from
    drifting when rotations and positions disagree slightly.
    """
    body = np.asarray(body, dtype=np.float64)
    yaw, pelvis = integrate_root(body[:, ROOT_SLICE])
    local_rot = matrix_from_rot6d(body[:, ROT_SLICE].reshape(-1, N_BODY_JOINTS, 6))
    target_world = to_world(body_positions(body), yaw, pelvis)
    R_pelvis = yaw_matrices(yaw)

    clamped = np.zeros((body.shape[0], 2), dtype=bool)
    for i, side in enumerate(("left", "right")):
        leg = {"left": LEFT_LEG, "right": RIGHT_LEG}[side]
        res = solve_leg_ik(skeleton, side, R_pelvis, pelvis,
                           target_world[:, leg["ankle"]],
                           target_world[:, leg["knee"]])
        local_rot[:, leg["hip"]] = res.hip_local
        local_rot[:, leg["knee"]] = res.knee_local
        clamped[:, i] = res.clamped

    pos, rot = fk(skeleton, local_rot, yaw, pelvis)
    return VisualPose(positions=pos, rotations=rot, yaw=yaw,
                      pelvis_pos=pelvis, ik_clamped=clamped)
