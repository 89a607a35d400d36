"""Deterministic procedural motion corpus.

Each clip composes one body generator (walk, march, squat, turn, bow,
wave, reach_up, pick_up) with one hand style (fist, open_palm,
finger_curl, point) and one face style (smile, frown, surprise,
neutral).  Hand and face tracks animate as functions of the body's gait
phase, so cross-modality timing is a real, learnable signal.  Stance
feet are pinned exactly through the package's own leg IK, which makes
the derived contact flags match the authored stance masks.

Per-clip nuisance parameters (cadence, amplitude, phase offset) are
shared across the three tracks; they individuate clips within a class
so that pair-matching metrics have a unique correct answer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clip import MotionClip, MotionDataset
from .errors import InvalidSpecError
from .kinematics import (fk, root_channels_from_trajectory, solve_leg_ik,
                         to_root_frame, yaw_matrices)
from .pose import derive_foot_contacts, velocity_channels
from .preprocess import inject_jitter, split_dataset
from .rotations import rot6d_from_matrix
from .skeleton import (LEFT_LEG, N_BODY_JOINTS, N_HAND_JOINTS, RIGHT_LEG,
                       Skeleton, default_skeleton)

BODY_CLASSES = ("walk", "march", "squat", "turn", "bow", "wave",
                "reach_up", "pick_up")
HAND_CLASSES = ("fist", "open_palm", "finger_curl", "point")
FACE_CLASSES = ("smile", "frown", "surprise", "neutral")

# gait/cycle period in frames at 30 fps, before cadence jitter
_PERIOD = {"walk": 40, "march": 32, "squat": 64, "turn": 40, "bow": 48,
           "wave": 28, "reach_up": 72, "pick_up": 56}

_SPINE = (2, 5, 8)
_NECK, _HEAD = 11, 14
_L_SH, _R_SH, _L_EL, _R_EL = 15, 16, 17, 18


@dataclass(frozen=True)
class SyntheticSpec:
    n_clips: int = 1000
    duration_range: tuple[int, int] = (64, 96)
    body_vocab: tuple[str, ...] = BODY_CLASSES
    hand_vocab: tuple[str, ...] = HAND_CLASSES
    face_vocab: tuple[str, ...] = FACE_CLASSES
    p_hand: float = 0.6
    p_face: float = 0.6
    jitter_amplitude: float = 0.0
    fps: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clips < 1:
            raise InvalidSpecError("n_clips must be positive")
        lo, hi = self.duration_range
        if not (16 <= lo <= hi):
            raise InvalidSpecError(f"bad duration range {self.duration_range}")
        for name, p in (("p_hand", self.p_hand), ("p_face", self.p_face)):
            if not 0.0 <= p <= 1.0:
                raise InvalidSpecError(f"{name}={p} outside [0,1]")
        for vocab, known in ((self.body_vocab, BODY_CLASSES),
                             (self.hand_vocab, HAND_CLASSES),
                             (self.face_vocab, FACE_CLASSES)):
            if len(vocab) == 0:
                raise InvalidSpecError("empty motion vocabulary")
            unknown = [v for v in vocab if v not in known]
            if unknown:
                raise InvalidSpecError(f"unknown generators {unknown}")
        if self.jitter_amplitude < 0:
            raise InvalidSpecError("jitter amplitude must be >= 0")


# ---------------------------------------------------------------------------
# small rotation helpers (hinges about principal axes)

def _axis_rot(axis: str, angles: np.ndarray) -> np.ndarray:
    a = np.asarray(angles, dtype=np.float64)
    c, s = np.cos(a), np.sin(a)
    M = np.zeros(a.shape + (3, 3))
    i, j, k = {"x": (0, 1, 2), "y": (1, 2, 0), "z": (2, 0, 1)}[axis]
    M[..., i, i] = 1.0
    M[..., j, j] = c
    M[..., j, k] = -s
    M[..., k, j] = s
    M[..., k, k] = c
    return M


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


# ---------------------------------------------------------------------------
# body authoring

@dataclass
class _BodyPlan:
    yaw: np.ndarray            # (T,)
    pelvis: np.ndarray         # (T, 3)
    local_rot: np.ndarray      # (T, 21, 3, 3) upper-body rotations
    ankle_targets: dict        # side -> (T, 3) world
    foot_yaw: dict             # side -> (T,)
    planted: np.ndarray        # (T, 2) authored stance, left/right
    phase: np.ndarray          # (T,) gait phase in cycles


def _ankle_rest_height(sk: Skeleton) -> float:
    leg = LEFT_LEG
    return float(sk.root_height + sk.offsets[leg["hip"]][1]
                 + sk.offsets[leg["knee"]][1] + sk.offsets[leg["ankle"]][1])


def _identity_rots(T: int) -> np.ndarray:
    return np.broadcast_to(np.eye(3), (T, N_BODY_JOINTS, 3, 3)).copy()


def _path_fn(v: float, kappa: float):
    """Analytic constant-curvature ground path; t in frames."""
    def heading(t):
        return kappa * np.asarray(t, dtype=np.float64)

    def pos(t):
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros(t.shape + (3,))
        if abs(kappa) < 1e-12:
            out[..., 2] = v * t
        else:
            out[..., 0] = v / kappa * (1.0 - np.cos(kappa * t))
            out[..., 2] = v / kappa * np.sin(kappa * t)
        return out

    return heading, pos


def _gait_plan(sk: Skeleton, T: int, period: float, v: float, kappa: float,
               lift: float, u0: float, pelvis_y: float, bob: float,
               arm_swing: float, duty: float = 0.6) -> _BodyPlan:
    """Cyclic stepping: alternating authored foot plants, pinned in stance."""
    heading, path = _path_fn(v, kappa)
    t = np.arange(T, dtype=np.float64)
    s = t / period + u0
    ankle_y = _ankle_rest_height(sk)
    lat = abs(sk.offsets[LEFT_LEG["hip"]][0])

    yaw = heading(t)
    pelvis = path(t)
    pelvis[:, 1] = pelvis_y + bob * np.cos(4.0 * np.pi * s)

    targets, foot_yaw_d, planted = {}, {}, np.zeros((T, 2), dtype=bool)
    for col, (side, offset, sign) in enumerate(
            (("left", 0.0, 1.0), ("right", 0.5, -1.0))):
        k = np.floor(s - offset)
        u = s - offset - k

        def plant(kk):
            t_mid = (kk + offset + duty / 2.0 - u0) * period
            h = heading(t_mid)
            p = path(t_mid)
            p[..., 0] += sign * lat * np.cos(h)
            p[..., 2] += -sign * lat * np.sin(h)
            p[..., 1] = ankle_y
            return p, heading(t_mid)

        p0, h0 = plant(k)
        p1, h1 = plant(k + 1)
        in_stance = u < duty
        w = np.clip((u - duty) / (1.0 - duty), 0.0, 1.0)
        ease = _smoothstep(w)[:, None]
        swing = p0 * (1.0 - ease) + p1 * ease
        swing[:, 1] += lift * np.sin(np.pi * w)
        targets[side] = np.where(in_stance[:, None], p0, swing)
        foot_yaw_d[side] = np.where(in_stance, h0, h0 * (1.0 - w) + h1 * w)
        planted[:, col] = in_stance

    local = _identity_rots(T)
    if arm_swing > 0.0:
        swing_angle = arm_swing * np.sin(2.0 * np.pi * s)
        local[:, _L_SH] = _axis_rot("y", swing_angle)
        local[:, _R_SH] = _axis_rot("y", -swing_angle)
    return _BodyPlan(yaw=yaw, pelvis=pelvis, local_rot=local,
                     ankle_targets=targets, foot_yaw=foot_yaw_d,
                     planted=planted, phase=s)


def _standing_plan(sk: Skeleton, T: int, period: float, u0: float,
                   pelvis_y: float = 0.87) -> _BodyPlan:
    """Feet fixed under the hips for the whole clip."""
    t = np.arange(T, dtype=np.float64)
    s = t / period + u0
    ankle_y = _ankle_rest_height(sk)
    lat = abs(sk.offsets[LEFT_LEG["hip"]][0])
    pelvis = np.zeros((T, 3))
    pelvis[:, 1] = pelvis_y
    targets = {
        "left": np.tile([lat, ankle_y, 0.0], (T, 1)),
        "right": np.tile([-lat, ankle_y, 0.0], (T, 1)),
    }
    zero = np.zeros(T)
    return _BodyPlan(yaw=zero.copy(), pelvis=pelvis, local_rot=_identity_rots(T),
                     ankle_targets=targets, foot_yaw={"left": zero, "right": zero},
                     planted=np.ones((T, 2), dtype=bool), phase=s)


def _plan_body(sk: Skeleton, name: str, T: int, ps: float, amp: float,
               u0: float, turn_sign: float) -> _BodyPlan:
    period = _PERIOD[name] * ps
    phi = lambda plan: 2.0 * np.pi * plan.phase  # noqa: E731

    if name == "walk":
        return _gait_plan(sk, T, period, v=0.0145, kappa=0.0, lift=0.07,
                          u0=u0, pelvis_y=0.86, bob=0.010, arm_swing=0.25 * amp)
    if name == "march":
        return _gait_plan(sk, T, period, v=0.0, kappa=0.0, lift=0.26 * amp,
                          u0=u0, pelvis_y=0.86, bob=0.012, arm_swing=0.5 * amp)
    if name == "turn":
        return _gait_plan(sk, T, period, v=0.013, kappa=turn_sign * 0.030,
                          lift=0.07, u0=u0, pelvis_y=0.86, bob=0.010,
                          arm_swing=0.25 * amp)

    plan = _standing_plan(sk, T, period, u0)
    if name == "squat":
        prof = 0.5 - 0.5 * np.cos(phi(plan))
        plan.pelvis[:, 1] = 0.86 - 0.30 * prof
        ang = 0.9 * amp * prof
        plan.local_rot[:, _L_SH] = _axis_rot("y", -ang)
        plan.local_rot[:, _R_SH] = _axis_rot("y", ang)
    elif name == "bow":
        prof = 0.5 - 0.5 * np.cos(phi(plan))
        for j in _SPINE:
            plan.local_rot[:, j] = _axis_rot("x", 0.30 * amp * prof)
        plan.local_rot[:, _NECK] = _axis_rot("x", 0.15 * amp * prof)
        plan.pelvis[:, 1] -= 0.03 * prof
    elif name == "wave":
        ramp = _smoothstep(np.arange(T) / 12.0)
        plan.local_rot[:, _R_SH] = _axis_rot("z", -1.9 * ramp)
        wobble = (-0.35 + 0.5 * amp * np.sin(phi(plan))) * ramp
        plan.local_rot[:, _R_EL] = _axis_rot("z", wobble)
    elif name == "reach_up":
        prof = 0.5 - 0.5 * np.cos(phi(plan))
        plan.local_rot[:, _L_SH] = _axis_rot("z", 2.3 * prof)
        plan.local_rot[:, _R_SH] = _axis_rot("z", -2.3 * prof)
        plan.local_rot[:, _HEAD] = _axis_rot("x", -0.2 * amp * prof)
    elif name == "pick_up":
        prof = 0.5 - 0.5 * np.cos(phi(plan))
        for j in _SPINE:
            plan.local_rot[:, j] = _axis_rot("x", 0.45 * amp * prof)
        plan.local_rot[:, _R_SH] = _axis_rot("y", 1.1 * prof)
        plan.local_rot[:, _R_EL] = _axis_rot("y", 0.5 * prof)
        plan.pelvis[:, 1] = 0.86 - 0.22 * prof
    else:
        raise InvalidSpecError(f"unknown body generator {name!r}")
    return plan


def _realize_body(sk: Skeleton, plan: _BodyPlan, fps: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve legs, run FK, and pack the channel tuple.

    Returns (body (T,260) float32, stance (T,2) contact-aligned labels).
    """
    T = plan.yaw.shape[0]
    R_pelvis = yaw_matrices(plan.yaw)
    fwd = np.stack([np.sin(plan.yaw), np.zeros(T), np.cos(plan.yaw)], axis=-1)
    local = plan.local_rot
    for side, leg in (("left", LEFT_LEG), ("right", RIGHT_LEG)):
        target = plan.ankle_targets[side]
        hip_w = plan.pelvis + np.einsum("tij,j->ti", R_pelvis, sk.offsets[leg["hip"]])
        hint = 0.5 * (hip_w + target) + 0.18 * fwd
        res = solve_leg_ik(sk, side, R_pelvis, plan.pelvis, target, hint)
        local[:, leg["hip"]] = res.hip_local
        local[:, leg["knee"]] = res.knee_local
        # flat foot: world ankle frame follows the authored foot heading
        R_hip_w = np.einsum("tij,tjk->tik", R_pelvis, res.hip_local)
        R_knee_w = np.einsum("tij,tjk->tik", R_hip_w, res.knee_local)
        R_ankle_t = yaw_matrices(plan.foot_yaw[side])
        local[:, leg["ankle"]] = np.einsum("tji,tjk->tik", R_knee_w, R_ankle_t)

    pos_w, _ = fk(sk, local, plan.yaw, plan.pelvis)
    pos_rf = to_root_frame(pos_w, plan.yaw, plan.pelvis)
    root_ch = root_channels_from_trajectory(plan.yaw, plan.pelvis)
    vel_ch = velocity_channels(pos_rf)
    rot_ch = rot6d_from_matrix(local)
    contact_ch = derive_foot_contacts(pos_w, fps)
    body = np.concatenate([
        root_ch, pos_rf.reshape(T, -1), vel_ch.reshape(T, -1),
        rot_ch.reshape(T, -1), contact_ch,
    ], axis=1).astype(np.float32)

    # stance labels in the same forward-difference convention as contacts
    stance = plan.planted[:-1] & plan.planted[1:]
    stance = np.concatenate([stance, stance[-1:]], axis=0)
    return body, stance


# ---------------------------------------------------------------------------
# hand and face authoring (phase-locked to the body cycle)

# per-finger curl profile: (index, middle, pinky, ring, thumb)
_HAND_PARAMS = {
    "fist": (np.array([1.1, 1.1, 1.1, 1.1, 0.8]), np.array([0.12] * 5)),
    "open_palm": (np.array([0.05] * 5), np.array([0.06] * 5)),
    "finger_curl": (np.array([0.55, 0.55, 0.55, 0.55, 0.40]),
                    np.array([0.55, 0.55, 0.55, 0.55, 0.30])),
    "point": (np.array([0.03, 1.2, 1.2, 1.2, 0.7]), np.array([0.08] * 5)),
}
_JOINT_FALLOFF = np.array([1.0, 0.9, 0.8])


def _author_hand(name: str, phase: np.ndarray, amp: float) -> np.ndarray:
    base, osc = _HAND_PARAMS[name]
    T = phase.shape[0]
    phi = 2.0 * np.pi * phase
    angles = np.zeros((T, N_HAND_JOINTS))
    for f in range(5):
        wave = base[f] + osc[f] * np.sin(phi + 0.3 * f)
        for d in range(3):
            angles[:, f * 3 + d] = amp * wave * _JOINT_FALLOFF[d]
    both = np.concatenate([angles, angles], axis=1)  # left then right hand
    return rot6d_from_matrix(_axis_rot("x", both)).reshape(T, -1).astype(np.float32)


def _author_face(name: str, phase: np.ndarray, amp: float) -> np.ndarray:
    T = phase.shape[0]
    phi = 2.0 * np.pi * phase
    jaw_angle = np.zeros(T)
    expr = np.zeros((T, 50))
    if name == "smile":
        expr[:, 0] = 0.85 + 0.12 * np.sin(phi)
        expr[:, 1] = 0.35
        expr[:, 6] = 0.15 * np.sin(phi + 1.0)
        jaw_angle[:] = 0.05
    elif name == "frown":
        expr[:, 2] = 0.9 + 0.12 * np.cos(phi)
        expr[:, 3] = 0.30
        jaw_angle[:] = 0.03
    elif name == "surprise":
        expr[:, 4] = 0.9
        expr[:, 5] = 0.25 + 0.2 * np.sin(phi)
        jaw_angle = 0.30 + 0.18 * np.sin(phi)
    else:  # neutral
        expr[:, 8] = 0.08 + 0.05 * np.sin(phi)
        jaw_angle[:] = 0.02
    jaw = rot6d_from_matrix(_axis_rot("x", amp * jaw_angle))
    return np.concatenate([jaw, amp * expr], axis=1).astype(np.float32)


# ---------------------------------------------------------------------------
# captions

_BODY_PHRASES = {
    "walk": ("walks forward", "is walking straight ahead",
             "strolls forward at an easy pace"),
    "march": ("marches in place", "is marching on the spot",
              "does a steady march without moving forward"),
    "squat": ("performs deep squats", "is squatting up and down",
              "bends the knees into repeated squats"),
    "turn": ("walks along a curve while turning", "is walking and turning around",
             "follows a curved path as it turns"),
    "bow": ("bows politely", "is bowing forward",
            "bends forward into a bow"),
    "wave": ("waves one arm", "is waving a raised hand",
             "greets by waving an arm overhead"),
    "reach_up": ("reaches both arms up high", "is reaching upward with both hands",
                 "stretches the arms overhead"),
    "pick_up": ("bends down to pick something up",
                "is picking an object up from the floor",
                "crouches and lifts something off the ground"),
}
_HAND_PHRASES = {
    "fist": ("clenching both fists", "with the hands balled into fists",
             "keeping the fists squeezed tight"),
    "open_palm": ("keeping the palms open", "with relaxed open hands",
                  "holding the palms spread flat"),
    "finger_curl": ("curling the fingers over and over",
                    "with the fingers curling rhythmically",
                    "flexing the fingers repeatedly"),
    "point": ("pointing with the index finger",
              "with one finger extended to point",
              "holding the index finger out"),
}
_FACE_PHRASES = {
    "smile": ("a happy smiling face", "a broad smile", "a cheerful grin"),
    "frown": ("an angry frowning face", "a deep frown", "a cross scowl"),
    "surprise": ("a surprised open-mouthed face", "wide-eyed astonishment",
                 "a startled expression"),
    "neutral": ("a calm neutral face", "a blank expression",
                "an even relaxed look"),
}


def caption_variants(body: str, hand: str, face: str) -> list[str]:
    b, h, f = _BODY_PHRASES[body], _HAND_PHRASES[hand], _FACE_PHRASES[face]
    return [
        f"a person {b[0]} while {h[0]}, showing {f[0]}.",
        f"someone {b[1]}, {h[1]}, with {f[1]}.",
        f"a figure {b[2]}, {h[2]}, wearing {f[2]}.",
    ]


# ---------------------------------------------------------------------------
# corpus assembly

def make_clip(spec: SyntheticSpec, sk: Skeleton, clip_id: str,
              rng: np.random.Generator) -> MotionClip:
    body_c = spec.body_vocab[rng.integers(len(spec.body_vocab))]
    hand_c = spec.hand_vocab[rng.integers(len(spec.hand_vocab))]
    face_c = spec.face_vocab[rng.integers(len(spec.face_vocab))]
    lo, hi = spec.duration_range
    T = int(rng.integers(lo, hi + 1))
    ps = float(rng.uniform(0.9, 1.1))
    amp = float(rng.uniform(0.85, 1.15))
    u0 = float(rng.uniform(0.0, 1.0))
    turn_sign = 1.0 if rng.uniform() < 0.5 else -1.0
    has_hand = bool(rng.uniform() < spec.p_hand)
    has_face = bool(rng.uniform() < spec.p_face)

    plan = _plan_body(sk, body_c, T, ps, amp, u0, turn_sign)
    body, stance = _realize_body(sk, plan, spec.fps)
    hand = _author_hand(hand_c, plan.phase, amp) if has_hand else None
    face = _author_face(face_c, plan.phase, amp) if has_face else None

    if spec.jitter_amplitude > 0.0:
        body = inject_jitter(body, spec.jitter_amplitude, rng).astype(np.float32)
        if hand is not None:
            hand = inject_jitter(hand, spec.jitter_amplitude, rng).astype(np.float32)
        if face is not None:
            face = inject_jitter(face, spec.jitter_amplitude, rng).astype(np.float32)

    labels = {
        "body_class": body_c, "hand_class": hand_c, "face_class": face_c,
        "class_key": f"{body_c}+{hand_c}+{face_c}",
        "stance": stance.astype(int).tolist(),
        "period_frames": _PERIOD[body_c] * ps,
        "phase_offset": u0, "amp_scale": amp,
    }
    return MotionClip(id=clip_id, fps=spec.fps, body=body, hand=hand,
                      face=face, texts=caption_variants(body_c, hand_c, face_c),
                      labels=labels)


def make_synthetic_dataset(spec: SyntheticSpec,
                           skeleton: Skeleton | None = None) -> MotionDataset:
    """Build the full corpus; byte-identical for equal specs."""
    sk = skeleton or default_skeleton()
    rng = np.random.default_rng(spec.seed)
    width = max(4, len(str(spec.n_clips - 1)))
    clips = [make_clip(spec, sk, f"syn{idx:0{width}d}", rng)
             for idx in range(spec.n_clips)]
    splits = split_dataset(clips, seed=spec.seed)
    return MotionDataset(clips=clips, splits=splits, fps=spec.fps)
