"""Left/right mirroring as a signed channel permutation.

Mirroring reflects the motion through the sagittal plane: left/right
joints swap, lateral (x) components flip sign, and every rotation R is
conjugated to S R S with S = diag(-1, 1, 1).  In the 6D rotation
encoding that conjugation is itself just a per-channel sign pattern, so
the whole operation is out[:, j] = sign[j] * in[:, perm[j]] and is an
exact involution.
"""
from __future__ import annotations

import numpy as np

from .clip import MotionClip
from .pose import (BODY_DIM, CONTACT_SLICE, FACE_DIM, HAND_DIM, POS_SLICE,
                   ROOT_SLICE, ROT_SLICE, VEL_SLICE)
from .rotations import ROT6D_MIRROR_SIGNS
from .skeleton import (BODY_MIRROR_MAP, N_BODY_JOINTS, N_HAND_JOINTS,
                       Skeleton)

_POINT_SIGNS = np.array([-1.0, 1.0, 1.0])


def _body_perm_signs(mirror_map) -> tuple[np.ndarray, np.ndarray]:
    perm = np.arange(BODY_DIM)
    signs = np.ones(BODY_DIM)
    # root: yaw rate and lateral velocity flip; forward velocity and height keep
    signs[ROOT_SLICE] = [-1.0, -1.0, 1.0, 1.0]
    for block, width, s in ((POS_SLICE, 3, _POINT_SIGNS),
                            (VEL_SLICE, 3, _POINT_SIGNS),
                            (ROT_SLICE, 6, np.asarray(ROT6D_MIRROR_SIGNS))):
        base = block.start
        for j in range(N_BODY_JOINTS):
            src = mirror_map[j]
            perm[base + j * width: base + (j + 1) * width] = \
                np.arange(base + src * width, base + (src + 1) * width)
            signs[base + j * width: base + (j + 1) * width] = s
    # contacts (L heel, L toe, R heel, R toe) -> swap the L and R pairs
    c = CONTACT_SLICE.start
    perm[c:c + 4] = [c + 2, c + 3, c + 0, c + 1]
    return perm, signs


def _hand_perm_signs() -> tuple[np.ndarray, np.ndarray]:
    perm = np.empty(HAND_DIM, dtype=int)
    signs = np.tile(np.asarray(ROT6D_MIRROR_SIGNS), 2 * N_HAND_JOINTS)
    for j in range(2 * N_HAND_JOINTS):
        src = (j + N_HAND_JOINTS) % (2 * N_HAND_JOINTS)  # swap hands
        perm[j * 6:(j + 1) * 6] = np.arange(src * 6, (src + 1) * 6)
    return perm, signs


def _face_perm_signs() -> tuple[np.ndarray, np.ndarray]:
    perm = np.arange(FACE_DIM)
    signs = np.ones(FACE_DIM)
    signs[:6] = ROT6D_MIRROR_SIGNS  # jaw is a rotation; expression copies
    return perm, signs


_BODY_PERM, _BODY_SIGNS = _body_perm_signs(BODY_MIRROR_MAP)
_HAND_PERM, _HAND_SIGNS = _hand_perm_signs()
_FACE_PERM, _FACE_SIGNS = _face_perm_signs()


def mirror_channels(x: np.ndarray, modality: str,
                    skeleton: Skeleton | None = None) -> np.ndarray:
    """Mirror a (T, d) channel array for one modality."""
    x = np.asarray(x)
    if modality == "body":
        perm, signs = (_BODY_PERM, _BODY_SIGNS) if skeleton is None \
            else _body_perm_signs(skeleton.mirror_map)
    elif modality == "hand":
        perm, signs = _HAND_PERM, _HAND_SIGNS
    elif modality == "face":
        perm, signs = _FACE_PERM, _FACE_SIGNS
    else:
        raise KeyError(modality)
    return (x[..., perm] * signs).astype(x.dtype)


def mirror_clip(clip: MotionClip, skeleton: Skeleton | None = None) -> MotionClip:
    """Mirrored copy of a clip; id gains a '_M' suffix, texts are kept."""
    out = clip.with_tracks(
        body=mirror_channels(clip.body, "body", skeleton),
        hand=None if clip.hand is None else mirror_channels(clip.hand, "hand"),
        face=None if clip.face is None else mirror_channels(clip.face, "face"),
    )
    out.id = clip.id + "_M"
    return out
