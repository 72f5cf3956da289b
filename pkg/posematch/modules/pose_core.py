# modules/pose_core.py

"""
Quaternion and rigid-pose algebra.

Relative poses are expressed the way the matcher regresses them: a camera-frame
rotation quaternion plus an untangled translation (image-plane offset in
pixels and log depth ratio), both standardized to zero mean and unit variance.
"""

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from posematch.core.exceptions import (
    NonPositiveDepth,
    ValidationError,
    ZeroNormQuaternion,
    handle_exceptions,
    ConfigurationError,
)
from posematch.core.model import (
    CameraIntrinsics,
    Pose,
    RawQuaternion,
    UnitQuaternion,
    UntangledDelta,
)

logger = logging.getLogger(__name__)

ZERO_NORM_THRESHOLD = 1e-12
VECTOR_SIZE = 7


def _as_quat_array(q) -> np.ndarray:
    if isinstance(q, (UnitQuaternion, RawQuaternion)):
        return q.as_array()
    return np.asarray(q, dtype=float)


def hamilton_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_normalize(q) -> UnitQuaternion:
    """Scale a quaternion of any norm to unit length, keeping its direction."""
    values = _as_quat_array(q)
    norm = float(np.linalg.norm(values))
    if norm < ZERO_NORM_THRESHOLD:
        raise ZeroNormQuaternion(f"Cannot normalize quaternion with norm {norm:.3e}")
    return UnitQuaternion.from_array(values / norm)


def quat_compose(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion:
    """Hamilton product a * b: rotation b followed by rotation a."""
    return quat_normalize(hamilton_product(a.as_array(), b.as_array()))


def quat_angle_deg(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """
    Angle distance between two rotations, in degrees, range [0, 180].

    Equals 2*arccos(min(1, |<a, b>|)); evaluated through atan2 of the relative
    quaternion so angles near zero keep full precision. Invariant under q -> -q.
    """
    rel = hamilton_product(a.conjugate().as_array(), b.as_array())
    return float(np.degrees(2.0 * np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0]))))


def relative_rotation(src: UnitQuaternion, tgt: UnitQuaternion) -> UnitQuaternion:
    """Camera-frame delta d with tgt = d * src."""
    return quat_compose(tgt, src.conjugate())


def slerp(a: UnitQuaternion, b: UnitQuaternion, s: float) -> UnitQuaternion:
    """Shortest-arc spherical interpolation from a (s=0) to b (s=1, up to sign)."""
    if not 0.0 <= s <= 1.0:
        raise ValidationError(f"slerp parameter must lie in [0, 1], got {s}")
    qa, qb = a.as_array(), b.as_array()
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb, dot = -qb, -dot
    if s == 0.0:
        return a
    # Half-angle between the two quaternions on the 4-sphere
    omega = np.arctan2(np.linalg.norm(qb - dot * qa), dot)
    if omega < 1e-12:
        return quat_normalize(qa + s * (qb - qa))
    sin_omega = np.sin(omega)
    out = (np.sin((1.0 - s) * omega) / sin_omega) * qa + (np.sin(s * omega) / sin_omega) * qb
    return quat_normalize(out)


def _check_depth(pose: Pose, role: str) -> None:
    if not pose.z > 0:
        raise NonPositiveDepth(f"{role} pose depth must be positive, got z={pose.z}")


def untangle(src: Pose, tgt: Pose, cam: CameraIntrinsics) -> UntangledDelta:
    """Translation from src to tgt as (pixel offset x, pixel offset y, ln(src.z / tgt.z))."""
    _check_depth(src, "source")
    _check_depth(tgt, "target")
    sx, sy, sz = src.translation
    tx, ty, tz = tgt.translation
    return UntangledDelta(
        vx=cam.fx * (tx / tz - sx / sz),
        vy=cam.fy * (ty / tz - sy / sz),
        vz=float(np.log(sz / tz)),
    )


def entangle(src: Pose, delta_rot: UnitQuaternion, delta_t: UntangledDelta,
             cam: CameraIntrinsics) -> Pose:
    """Apply a relative rotation and an untangled translation to src."""
    _check_depth(src, "source")
    sx, sy, sz = src.translation
    tz = sz / np.exp(delta_t.vz)
    tx = tz * (sx / sz + delta_t.vx / cam.fx)
    ty = tz * (sy / sz + delta_t.vy / cam.fy)
    return Pose(rotation=quat_compose(delta_rot, src.rotation), translation=(tx, ty, tz))


def relative_pose_vector(src: Pose, tgt: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """Regression target from src to tgt: quaternion (4) followed by untangled translation (3)."""
    q = relative_rotation(src.rotation, tgt.rotation).as_array()
    v = untangle(src, tgt, cam).as_array()
    return np.concatenate([q, v])


@dataclass(frozen=True)
class StandardizationStats:
    """Per-component mean and standard deviation of the 7-vector regression targets."""
    mean: tuple
    std: tuple

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        std = tuple(float(v) for v in self.std)
        if len(mean) != VECTOR_SIZE or len(std) != VECTOR_SIZE:
            raise ValidationError(f"Standardization stats need {VECTOR_SIZE} components")
        if not all(s > 0 for s in std):
            raise ValidationError(f"Every std component must be positive, got {std}")
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'std', std)

    @classmethod
    def identity(cls) -> "StandardizationStats":
        return cls(mean=(0.0,) * VECTOR_SIZE, std=(1.0,) * VECTOR_SIZE)

    @classmethod
    def fit(cls, samples: np.ndarray) -> "StandardizationStats":
        """Population mean and std of an (N, 7) pool."""
        pool = np.asarray(samples, dtype=float)
        if pool.ndim != 2 or pool.shape[1] != VECTOR_SIZE or len(pool) < 2:
            raise ValidationError(f"Need an (N>=2, {VECTOR_SIZE}) pool, got {pool.shape}")
        return cls(mean=tuple(pool.mean(axis=0)), std=tuple(pool.std(axis=0)))

    def to_dict(self) -> dict:
        return {'mean': list(self.mean), 'std': list(self.std)}

    @classmethod
    def from_dict(cls, data: dict) -> "StandardizationStats":
        try:
            return cls(mean=data['mean'], std=data['std'])
        except (KeyError, TypeError) as e:
            raise ConfigurationError("Standardization stats need 'mean' and 'std' lists", e)

    @handle_exceptions(ConfigurationError, "Error writing standardization stats")
    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)
        logger.info(f"Wrote standardization stats to {path}")

    @classmethod
    @handle_exceptions(ConfigurationError, "Error reading standardization stats")
    def load(cls, path: str) -> "StandardizationStats":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def standardize(raw: Sequence[float], stats: StandardizationStats) -> np.ndarray:
    """(raw - mean) / std, component-wise. Works on a 7-vector or an (N, 7) array."""
    return (np.asarray(raw, dtype=float) - np.array(stats.mean)) / np.array(stats.std)


def destandardize(values: Sequence[float], stats: StandardizationStats) -> np.ndarray:
    """Inverse of standardize."""
    return np.asarray(values, dtype=float) * np.array(stats.std) + np.array(stats.mean)


__all__ = [
    'quat_normalize', 'quat_compose', 'quat_angle_deg', 'relative_rotation', 'slerp',
    'untangle', 'entangle', 'relative_pose_vector', 'hamilton_product',
    'StandardizationStats', 'standardize', 'destandardize',
]
