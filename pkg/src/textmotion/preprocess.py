"""High-frequency jitter scoring/smoothing, resampling, and splitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt

from .clip import MotionClip, MotionDataset, NormStats, compute_norm_stats
from .errors import (InvalidCutoffError, TooShortError,
                     UpsampleUnsupportedError)
from .kinematics import (integrate_root, root_channels_from_trajectory,
                         to_world)
from .pose import (CONTACT_SLICE, POS_SLICE, ROOT_SLICE, ROT_SLICE, VEL_SLICE,
                   N_BODY_JOINTS, derive_foot_contacts, velocity_channels)
from .rotations import renormalize_rot6d

DEFAULT_CUTOFF_HZ = 6.0
_POWER_EPS = 1e-12


def _check_cutoff(fps: float, cutoff_hz: float) -> None:
    if not 0.0 < cutoff_hz < fps / 2.0:
        raise InvalidCutoffError(
            f"cutoff {cutoff_hz} Hz outside (0, {fps / 2.0}) for fps {fps}")


@dataclass
class JitterReport:
    score: float            # mean high-frequency power ratio, in [0,1]
    per_channel: np.ndarray  # (d,) ratios
    cutoff_hz: float
    fps: float


def jitter_report(M: np.ndarray, fps: float,
                  cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> JitterReport:
    """Fraction of mean-removed spectral power above cutoff_hz.

    Per channel the signal is mean-removed and the DFT power in bins
    strictly above the cutoff is divided by the total; constant channels
    score 0.  The clip score averages the channel ratios.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    T = M.shape[0]
    if T < 8:
        raise TooShortError(f"need at least 8 frames, got {T}")
    _check_cutoff(fps, cutoff_hz)
    X = np.fft.rfft(M - M.mean(axis=0), axis=0)
    power = np.abs(X) ** 2
    freqs = np.fft.rfftfreq(T, d=1.0 / fps)
    total = power[1:].sum(axis=0)  # bin 0 is the removed mean
    high = power[freqs > cutoff_hz].sum(axis=0)
    per_channel = np.where(total > _POWER_EPS, high / np.maximum(total, _POWER_EPS), 0.0)
    return JitterReport(score=float(per_channel.mean()),
                        per_channel=per_channel, cutoff_hz=cutoff_hz, fps=fps)


def jitter_score(M: np.ndarray, fps: float,
                 cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> float:
    return jitter_report(M, fps, cutoff_hz).score


def smooth_motion(M: np.ndarray, fps: float,
                  cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> np.ndarray:
    """Zero-phase 2nd-order Butterworth low-pass along time.

    Forward-backward filtering with reflect padding: no temporal lag, so
    smoothed tracks stay synchronized across modalities.
    """
    M = np.asarray(M, dtype=np.float64)
    squeeze = M.ndim == 1
    if squeeze:
        M = M[:, None]
    T = M.shape[0]
    if T < 8:
        raise TooShortError(f"need at least 8 frames, got {T}")
    _check_cutoff(fps, cutoff_hz)
    b, a = butter(2, cutoff_hz / (fps / 2.0))
    padlen = min(3 * max(len(a), len(b)), T - 1)
    out = filtfilt(b, a, M, axis=0, padtype="even", padlen=padlen)
    # reflect padding leaks a small edge transient into the channel mean;
    # re-centre so the DC component passes through exactly
    out += M.mean(axis=0) - out.mean(axis=0)
    return out[:, 0] if squeeze else out


def smooth_clip(clip: MotionClip, cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> MotionClip:
    """Low-pass every continuous channel; contact flags are re-derived
    from the smoothed world foot trajectories, never filtered."""
    body = smooth_motion(clip.body, clip.fps, cutoff_hz).astype(np.float32)
    yaw, pelvis = integrate_root(body[:, ROOT_SLICE])
    world = to_world(body[:, POS_SLICE].reshape(-1, N_BODY_JOINTS, 3), yaw, pelvis)
    body[:, CONTACT_SLICE] = derive_foot_contacts(world, clip.fps)
    return clip.with_tracks(
        body=body,
        hand=None if clip.hand is None else
        smooth_motion(clip.hand, clip.fps, cutoff_hz).astype(np.float32),
        face=None if clip.face is None else
        smooth_motion(clip.face, clip.fps, cutoff_hz).astype(np.float32),
    )


def inject_jitter(M: np.ndarray, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """Add a Nyquist-frequency wobble with random per-channel magnitude."""
    M = np.asarray(M, dtype=np.float64)
    tone = np.power(-1.0, np.arange(M.shape[0]))[:, None]
    return M + amplitude * tone * rng.normal(size=(1, M.shape[1]))


def resample_array(X: np.ndarray, src_fps: float, dst_fps: float) -> np.ndarray:
    """Linear time resampling of a (T, d) array; downsampling only."""
    X = np.asarray(X)
    if dst_fps > src_fps + 1e-9:
        raise UpsampleUnsupportedError(
            f"cannot resample {src_fps} fps up to {dst_fps} fps")
    if abs(dst_fps - src_fps) < 1e-9:
        return X.copy()
    T = X.shape[0]
    t_src = np.arange(T) / src_fps
    n_out = int(np.floor((T - 1) / src_fps * dst_fps + 1e-9)) + 1
    t_out = np.arange(n_out) / dst_fps
    idx = np.clip(np.searchsorted(t_src, t_out, side="right") - 1, 0, T - 2)
    w = (t_out - t_src[idx]) * src_fps
    w = np.clip(w, 0.0, 1.0)[:, None]
    return (X[idx] * (1.0 - w) + X[idx + 1] * w).astype(X.dtype)


def resample_clip(clip: MotionClip, target_fps: float = 30.0) -> MotionClip:
    """Downsample a clip, rebuilding the derived channels.

    Root channels are integrated to a trajectory, the trajectory is
    interpolated, and per-frame rates are re-differenced; 6D rotation
    blocks are re-orthonormalized after interpolation; velocities and
    contacts are recomputed at the new rate.
    """
    if target_fps > clip.fps + 1e-9:
        raise UpsampleUnsupportedError(
            f"clip {clip.id!r} at {clip.fps} fps cannot be upsampled to {target_fps}")
    if abs(target_fps - clip.fps) < 1e-9:
        return clip.with_tracks(body=clip.body.copy())

    src = float(clip.fps)
    yaw, pelvis = integrate_root(clip.body[:, ROOT_SLICE])
    yaw_n = resample_array(yaw[:, None], src, target_fps)[:, 0]
    pelvis_n = resample_array(pelvis, src, target_fps)
    root_n = root_channels_from_trajectory(yaw_n, pelvis_n)

    pos_n = resample_array(clip.body[:, POS_SLICE].astype(np.float64), src, target_fps)
    rot_n = resample_array(clip.body[:, ROT_SLICE].astype(np.float64), src, target_fps)
    rot_n = renormalize_rot6d(rot_n.reshape(-1, N_BODY_JOINTS, 6)).reshape(len(rot_n), -1)
    vel_n = velocity_channels(pos_n.reshape(-1, N_BODY_JOINTS, 3)).reshape(len(pos_n), -1)
    world = to_world(pos_n.reshape(-1, N_BODY_JOINTS, 3), yaw_n, pelvis_n)
    contacts_n = derive_foot_contacts(world, target_fps)

    body_n = np.concatenate([root_n, pos_n, vel_n, rot_n, contacts_n],
                            axis=1).astype(np.float32)

    hand_n = None
    if clip.hand is not None:
        hand_n = resample_array(clip.hand.astype(np.float64), src, target_fps)
        hand_n = renormalize_rot6d(hand_n.reshape(len(hand_n), -1, 6)) \
            .reshape(len(hand_n), -1).astype(np.float32)
    face_n = None
    if clip.face is not None:
        face_n = resample_array(clip.face.astype(np.float64), src, target_fps)
        face_n[:, :6] = renormalize_rot6d(face_n[:, :6])
        face_n = face_n.astype(np.float32)

    return MotionClip(id=clip.id, fps=target_fps, body=body_n, hand=hand_n,
                      face=face_n, texts=list(clip.texts), labels=dict(clip.labels))


def _class_key(clip: MotionClip) -> str:
    if "class_key" in clip.labels:
        return str(clip.labels["class_key"])
    return clip.texts[0] if clip.texts else clip.id


def split_dataset(clips: list[MotionClip], seed: int = 0,
                  ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> dict[str, list[str]]:
    """Disjoint, exhaustive train/val/test split, stratified by class.

    Every class that appears in val or test keeps at least one training
    clip, so retrieval over the test split always has a matching train
    example to learn from.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    groups: dict[str, list[str]] = {}
    for clip in clips:
        groups.setdefault(_class_key(clip), []).append(clip.id)
    rng = np.random.default_rng(seed)
    assigned: dict[str, dict[str, list[str]]] = {}
    for key in sorted(groups):
        ids = sorted(groups[key])
        rng.shuffle(ids)
        n = len(ids)
        n_val = int(n * ratios[1] + 0.5)
        n_test = int(n * ratios[2] + 0.5)
        while n - n_val - n_test < 1 and n_test > 0:
            n_test -= 1
        while n - n_val - n_test < 1 and n_val > 0:
            n_val -= 1
        n_train = n - n_val - n_test
        assigned[key] = {"train": ids[:n_train],
                         "val": ids[n_train:n_train + n_val],
                         "test": ids[n_train + n_val:]}
    # tiny corpora can round every group down to train-only; move one clip
    # out of the largest training groups so eval splits are never empty
    for name in ("test", "val"):
        if any(a[name] for a in assigned.values()):
            continue
        donors = sorted((k for k in assigned if len(assigned[k]["train"]) >= 2),
                        key=lambda k: (-len(assigned[k]["train"]), k))
        if donors:
            key = donors[0]
            assigned[key][name].append(assigned[key]["train"].pop())
    splits = {name: sorted(i for a in assigned.values() for i in a[name])
              for name in ("train", "val", "test")}
    return splits


def train_norm_stats(dataset: MotionDataset) -> NormStats:
    """Channel statistics from the training split only."""
    return compute_norm_stats(dataset.split("train"))
