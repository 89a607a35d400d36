"""Whole-body pose channel layout and frame-level operations.

A body frame is the 260-wide concatenation
    root(4) | joint positions(21*3) | joint velocities(21*3)
    | joint rotations(21*6) | foot contacts(4)
with root = (yaw angular velocity rad/frame, x velocity, z velocity,
root height), positions/velocities in the yaw-aligned root frame.
A hand frame is 30 finger-joint 6D rotations (left hand then right,
wrist space), 180 wide.  A face frame is jaw 6D + 50 expression
coefficients, 56 wide.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, TooShortError
from .skeleton import HEEL_TOE_INDICES, N_BODY_JOINTS, N_HAND_JOINTS

ROOT_DIM = 4
BODY_POS_DIM = N_BODY_JOINTS * 3
BODY_VEL_DIM = N_BODY_JOINTS * 3
BODY_ROT_DIM = N_BODY_JOINTS * 6
CONTACT_DIM = 4
BODY_DIM = ROOT_DIM + BODY_POS_DIM + BODY_VEL_DIM + BODY_ROT_DIM + CONTACT_DIM  # 260
HAND_DIM = 2 * N_HAND_JOINTS * 6  # 180
FACE_DIM = 6 + 50  # 56

MODALITIES = ("body", "hand", "face")
MODALITY_DIMS = {"body": BODY_DIM, "hand": HAND_DIM, "face": FACE_DIM}

_o = 0
ROOT_SLICE = slice(_o, _o + ROOT_DIM); _o += ROOT_DIM
POS_SLICE = slice(_o, _o + BODY_POS_DIM); _o += BODY_POS_DIM
VEL_SLICE = slice(_o, _o + BODY_VEL_DIM); _o += BODY_VEL_DIM
ROT_SLICE = slice(_o, _o + BODY_ROT_DIM); _o += BODY_ROT_DIM
CONTACT_SLICE = slice(_o, _o + CONTACT_DIM); _o += CONTACT_DIM
assert _o == BODY_DIM

# Default stationarity threshold for contact flags: squared per-frame
# displacement below (2 mm)^2 at 30 fps counts as planted.
CONTACT_THRESHOLD_M = 0.002


@dataclass(frozen=True)
class WholeBodyPose:
    """One frame of the full channel tuple; arrays are read-only views."""

    root: np.ndarray          # (4,)
    body_pos: np.ndarray      # (21, 3)
    body_vel: np.ndarray      # (21, 3)
    body_rot: np.ndarray      # (21, 6)
    foot_contacts: np.ndarray  # (4,) in {0,1}
    hand_rot: np.ndarray | None = None   # (30, 6)
    jaw_rot: np.ndarray | None = None    # (6,)
    expression: np.ndarray | None = None  # (50,)

    def body_channels(self) -> np.ndarray:
        return np.concatenate([
            self.root.ravel(), self.body_pos.ravel(), self.body_vel.ravel(),
            self.body_rot.ravel(), self.foot_contacts.ravel(),
        ]).astype(np.float32)

    def hand_channels(self) -> np.ndarray | None:
        if self.hand_rot is None:
            return None
        return self.hand_rot.ravel().astype(np.float32)

    def face_channels(self) -> np.ndarray | None:
        if self.jaw_rot is None or self.expression is None:
            return None
        return np.concatenate([self.jaw_rot.ravel(),
                               self.expression.ravel()]).astype(np.float32)

    @classmethod
    def from_channels(cls, body: np.ndarray, hand: np.ndarray | None = None,
                      face: np.ndarray | None = None) -> "WholeBodyPose":
        body = np.asarray(body)
        if body.shape != (BODY_DIM,):
            raise ShapeMismatchError(f"body frame must be ({BODY_DIM},), got {body.shape}")
        kw = {}
        if hand is not None:
            hand = np.asarray(hand)
            if hand.shape != (HAND_DIM,):
                raise ShapeMismatchError(f"hand frame must be ({HAND_DIM},), got {hand.shape}")
            kw["hand_rot"] = hand.reshape(2 * N_HAND_JOINTS, 6)
        if face is not None:
            face = np.asarray(face)
            if face.shape != (FACE_DIM,):
                raise ShapeMismatchError(f"face frame must be ({FACE_DIM},), got {face.shape}")
            kw["jaw_rot"] = face[:6]
            kw["expression"] = face[6:]
        return cls(
            root=body[ROOT_SLICE],
            body_pos=body[POS_SLICE].reshape(N_BODY_JOINTS, 3),
            body_vel=body[VEL_SLICE].reshape(N_BODY_JOINTS, 3),
            body_rot=body[ROT_SLICE].reshape(N_BODY_JOINTS, 6),
            foot_contacts=body[CONTACT_SLICE],
            **kw,
        )


def temporal_velocity(M: np.ndarray) -> np.ndarray:
    """First-order forward difference M[t+1] - M[t]; (T-1, d) output."""
    M = np.asarray(M)
    if M.shape[0] < 2:
        raise TooShortError("need at least 2 frames for a velocity")
    return M[1:] - M[:-1]


def velocity_channels(positions: np.ndarray) -> np.ndarray:
    """Length-preserving forward difference; the last frame repeats."""
    v = temporal_velocity(positions)
    return np.concatenate([v, v[-1:]], axis=0)


def derive_foot_contacts(positions: np.ndarray, fps: float,
                         threshold_m: float = CONTACT_THRESHOLD_M) -> np.ndarray:
    """Binary ground-contact flags from heel/toe stationarity.

    positions: (T, 21, 3) joint positions (a consistent frame; world
    positions for real ground contact).  Flag is 1 where the squared
    per-frame displacement of the joint stays below the threshold; the
    last frame copies the previous one.  threshold_m is stated per frame
    at 30 fps and rescaled for other rates, so it acts as a velocity
    criterion.  Output (T, 4) float32 in the (L heel, L toe, R heel,
    R toe) channel order.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 3 or positions.shape[1] < max(HEEL_TOE_INDICES) + 1:
        raise ShapeMismatchError(f"expected (T,{N_BODY_JOINTS},3), got {positions.shape}")
    T = positions.shape[0]
    if T < 2:
        raise TooShortError("need at least 2 frames to derive contacts")
    thr = threshold_m * (30.0 / fps)
    feet = positions[:, HEEL_TOE_INDICES, :]           # (T, 4, 3)
    disp2 = np.sum((feet[1:] - feet[:-1]) ** 2, axis=-1)  # (T-1, 4)
    flags = (disp2 < thr ** 2).astype(np.float32)
    return np.concatenate([flags, flags[-1:]], axis=0)


def set_contacts(body: np.ndarray, positions: np.ndarray, fps: float,
                 threshold_m: float = CONTACT_THRESHOLD_M) -> np.ndarray:
    """Return body channels with the contact block re-derived from `positions`."""
    out = np.array(body, dtype=np.float32, copy=True)
    out[:, CONTACT_SLICE] = derive_foot_contacts(positions, fps, threshold_m)
    return out


def body_rot6d_blocks(body: np.ndarray) -> np.ndarray:
    """(T, 21, 6) view of the rotation channels of a (T, 260) body array."""
    return np.asarray(body)[:, ROT_SLICE].reshape(-1, N_BODY_JOINTS, 6)


def body_positions(body: np.ndarray) -> np.ndarray:
    return np.asarray(body)[:, POS_SLICE].reshape(-1, N_BODY_JOINTS, 3)
