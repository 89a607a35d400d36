"""Canonical skeleton: joint ordering, rest offsets, mirror map.

All channel math in the package depends on this frozen ordering: 21 body
joints (the SMPL-X body joints with the pelvis root excluded), 15 finger
joints per hand.  Indices below are into the 21-joint body table; the
pelvis root is parent index -1.

Units are meters, y-up, z-forward, x to the character's left.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BODY_JOINT_NAMES = [
    "left_hip", "right_hip", "spine1",
    "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3",
    "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
]

# Parent of each body joint; -1 is the pelvis root.
BODY_PARENTS = [
    -1, -1, -1,
    0, 1, 2,
    3, 4, 5,
    6, 7,
    8, 8, 8, 11,
    12, 13,
    15, 16,
    17, 18,
]

# Left<->right counterpart for every body joint (self-indices on the spine).
BODY_MIRROR_MAP = [
    1, 0, 2,
    4, 3, 5,
    7, 6, 8,
    10, 9,
    11, 13, 12, 14,
    16, 15,
    18, 17,
    20, 19,
]

# Heel/toe joints used for ground-contact flags, channel order
# (left heel, left toe, right heel, right toe).
HEEL_TOE_INDICES = [6, 9, 7, 10]

# Rest-pose offsets from the parent joint (T-pose, arms along +/-x).
_REST_OFFSETS = [
    (+0.09, -0.06, 0.00),   # left_hip
    (-0.09, -0.06, 0.00),   # right_hip
    (0.00, +0.11, 0.00),    # spine1
    (0.00, -0.38, 0.00),    # left_knee
    (0.00, -0.38, 0.00),    # right_knee
    (0.00, +0.13, 0.00),    # spine2
    (0.00, -0.40, 0.00),    # left_ankle
    (0.00, -0.40, 0.00),    # right_ankle
    (0.00, +0.13, 0.00),    # spine3
    (0.00, -0.06, +0.13),   # left_foot
    (0.00, -0.06, +0.13),   # right_foot
    (0.00, +0.18, 0.00),    # neck
    (+0.08, +0.12, 0.00),   # left_collar
    (-0.08, +0.12, 0.00),   # right_collar
    (0.00, +0.12, 0.00),    # head
    (+0.10, 0.00, 0.00),    # left_shoulder
    (-0.10, 0.00, 0.00),    # right_shoulder
    (+0.26, 0.00, 0.00),    # left_elbow
    (-0.26, 0.00, 0.00),    # right_elbow
    (+0.25, 0.00, 0.00),    # left_wrist
    (-0.25, 0.00, 0.00),    # right_wrist
]

# Pelvis height above ground in the rest pose.
REST_ROOT_HEIGHT = 0.91

HAND_JOINT_NAMES = [
    "index1", "index2", "index3",
    "middle1", "middle2", "middle3",
    "pinky1", "pinky2", "pinky3",
    "ring1", "ring2", "ring3",
    "thumb1", "thumb2", "thumb3",
]

N_BODY_JOINTS = 21
N_HAND_JOINTS = 15  # per hand

LEFT_LEG = {"hip": 0, "knee": 3, "ankle": 6, "foot": 9}
RIGHT_LEG = {"hip": 1, "knee": 4, "ankle": 7, "foot": 10}

# Joints animated from predicted rotations in the hybrid visualization
# scheme (everything that is not hip/knee/ankle).
LOWER_BODY_JOINTS = [0, 1, 3, 4, 6, 7]
UPPER_BODY_JOINTS = [j for j in range(N_BODY_JOINTS) if j not in LOWER_BODY_JOINTS]


@dataclass(frozen=True)
class Skeleton:
    """Frozen joint table; safe to share across threads."""

    joint_names: tuple[str, ...]
    parents: tuple[int, ...]
    mirror_map: tuple[int, ...]
    heel_toe_indices: tuple[int, ...]
    offsets: np.ndarray  # (21, 3), read-only
    root_height: float

    def __post_init__(self):
        self.offsets.setflags(write=False)

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def bone_length(self, joint: int) -> float:
        return float(np.linalg.norm(self.offsets[joint]))

    def to_json(self) -> dict:
        return {
            "joint_names": list(self.joint_names),
            "parents": list(self.parents),
            "mirror_map": list(self.mirror_map),
            "heel_toe_indices": list(self.heel_toe_indices),
            "offsets": self.offsets.tolist(),
            "root_height": self.root_height,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Skeleton":
        return cls(
            joint_names=tuple(payload["joint_names"]),
            parents=tuple(payload["parents"]),
            mirror_map=tuple(payload["mirror_map"]),
            heel_toe_indices=tuple(payload["heel_toe_indices"]),
            offsets=np.asarray(payload["offsets"], dtype=np.float64),
            root_height=float(payload["root_height"]),
        )


def default_skeleton() -> Skeleton:
    return Skeleton(
        joint_names=tuple(BODY_JOINT_NAMES),
        parents=tuple(BODY_PARENTS),
        mirror_map=tuple(BODY_MIRROR_MAP),
        heel_toe_indices=tuple(HEEL_TOE_INDICES),
        offsets=np.asarray(_REST_OFFSETS, dtype=np.float64),
        root_height=REST_ROOT_HEIGHT,
    )
