# core/model.py

"""
Centralized data model for pose estimation.
Quaternions, poses, the camera, rasters, meshes and observations shared by all modules.

Quaternions are Hamilton, scalar-first (w, x, y, z) and right-handed. Rotations
act on camera-frame vectors; the camera looks along +z with +y pointing down
the image.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from posematch.config import RENDERING, ZOOM
from posematch.core.exceptions import ValidationError

UNIT_NORM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RawQuaternion:
    """Quaternion of arbitrary norm, as produced by an estimator."""
    w: float
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    @classmethod
    def from_array(cls, values) -> "RawQuaternion":
        w, x, y, z = (float(v) for v in values)
        return cls(w, x, y, z)


@dataclass(frozen=True)
class UnitQuaternion:
    """
    Rotation as a unit quaternion.

    q and -q are the same rotation. Components are stored exactly as produced;
    compare rotations with quat_angle_deg, never component-wise.
    """
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = float(np.sqrt(self.w ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise ValidationError(f"UnitQuaternion norm is {norm}, expected 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, values) -> "UnitQuaternion":
        w, x, y, z = (float(v) for v in values)
        return cls(w, x, y, z)

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis, angle_deg: float) -> "UnitQuaternion":
        axis = np.asarray(axis, dtype=float)
        length = np.linalg.norm(axis)
        if length == 0.0:
            raise ValidationError("Rotation axis must be non-zero")
        half = np.radians(angle_deg) / 2.0
        vec = axis / length * np.sin(half)
        q = np.array([np.cos(half), vec[0], vec[1], vec[2]])
        return cls.from_array(q / np.linalg.norm(q))

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def negated(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)

    def to_raw(self) -> RawQuaternion:
        return RawQuaternion(self.w, self.x, self.y, self.z)

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def rotate(self, vectors) -> np.ndarray:
        """Rotate a 3-vector or an (N, 3) array."""
        return np.asarray(vectors, dtype=float) @ self.as_matrix().T


@dataclass(frozen=True)
class Pose:
    """Object pose in the camera frame: rotation plus translation in meters."""
    rotation: UnitQuaternion
    translation: Tuple[float, float, float]

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3 or not all(np.isfinite(t)):
            raise ValidationError(f"Pose translation must be 3 finite values, got {self.translation}")
        object.__setattr__(self, 'translation', t)

    @property
    def z(self) -> float:
        return self.translation[2]

    def translation_array(self) -> np.ndarray:
        return np.array(self.translation, dtype=float)

    def transform(self, points) -> np.ndarray:
        """Map object-frame points into the camera frame."""
        return self.rotation.rotate(points) + self.translation_array()


@dataclass(frozen=True)
class UntangledDelta:
    """Relative translation: image-plane offset in pixels plus log depth ratio."""
    vx: float
    vy: float
    vz: float

    def __post_init__(self):
        if not all(np.isfinite([self.vx, self.vy, self.vz])):
            raise ValidationError(f"UntangledDelta must be finite, got {(self.vx, self.vy, self.vz)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz], dtype=float)

    @classmethod
    def from_array(cls, values) -> "UntangledDelta":
        vx, vy, vz = (float(v) for v in values)
        return cls(vx, vy, vz)

    @classmethod
    def zero(cls) -> "UntangledDelta":
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera without distortion."""
    fx: float
    fy: float
    px: float
    py: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("Focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("Sensor size must be positive")

    def project(self, points) -> np.ndarray:
        """Project camera-frame points (N, 3) to pixel coordinates (N, 2)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        u = self.fx * p[:, 0] / p[:, 2] + self.px
        v = self.fy * p[:, 1] / p[:, 2] + self.py
        return np.stack([u, v], axis=1)

    def to_dict(self) -> dict:
        return {'fx': self.fx, 'fy': self.fy, 'px': self.px, 'py': self.py,
                'width': self.width, 'height': self.height}

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        return cls(float(data['fx']), float(data['fy']), float(data['px']), float(data['py']),
                   int(data['width']), int(data['height']))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner and extent, in pixels."""
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"BBox extent must be positive, got w={self.w}, h={self.h}")

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.w, self.h))

    def contains(self, other: "BBox", tol: float = 1e-9) -> bool:
        return (self.x <= other.x + tol and self.y <= other.y + tol
                and self.x2 >= other.x2 - tol and self.y2 >= other.y2 - tol)

    def iou(self, other: "BBox") -> float:
        ix = max(0.0, min(self.x2, other.x2) - max(self.x, other.x))
        iy = max(0.0, min(self.y2, other.y2) - max(self.y, other.y))
        inter = ix * iy
        return inter / (self.w * self.h + other.w * other.h - inter)


@dataclass(eq=False)
class Image:
    """8-bit RGB raster, row-major, shape (height, width, 3)."""
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValidationError(f"Image must be (H, W, 3), got {self.pixels.shape}")
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def blank(cls, width: int, height: int) -> "Image":
        return cls(np.zeros((height, width, 3), dtype=np.uint8))


@dataclass(eq=False)
class Mask:
    """Boolean raster, row-major, shape (height, width)."""
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ValidationError(f"Mask must be 2-D, got {self.bits.shape}")
        self.bits = np.ascontiguousarray(self.bits, dtype=bool)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def blank(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(eq=False)
class TriangleMesh:
    """Triangle mesh in the object frame (meters) with per-vertex colors."""
    vertices: np.ndarray
    triangles: np.ndarray
    colors: Optional[np.ndarray] = None
    name: str = "mesh"
    _diameter: Optional[float] = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) == 0:
            raise ValidationError("Mesh needs at least one triangle")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise ValidationError("Triangle index out of range")
        if self.colors is None:
            self.colors = np.tile(np.array(RENDERING['default_color'], dtype=np.uint8), (len(self.vertices), 1))
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(self.colors) != len(self.vertices):
            raise ValidationError("One color per vertex is required")
        if self.diameter <= 0:
            raise ValidationError("Mesh diameter must be positive")

    @property
    def diameter(self) -> float:
        """Maximum pairwise vertex distance."""
        if self._diameter is None:
            self._diameter = _max_pairwise_distance(self.vertices)
        return self._diameter


def _max_pairwise_distance(vertices: np.ndarray) -> float:
    from scipy.spatial import ConvexHull, QhullError
    from scipy.spatial.distance import pdist

    points = np.unique(vertices, axis=0)
    if len(points) < 2:
        return 0.0
    if len(points) > 64:
        # The farthest pair always lies on the hull
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass
    return float(pdist(points).max())


@dataclass(eq=False)
class RenderOutput:
    """RGB, mask and depth (meters, +inf on background) of one render."""
    rgb: Image
    mask: Mask
    depth: np.ndarray


@dataclass(eq=False)
class Observation:
    """Zoomed RGB + mask pair fed to an estimator, with the crop box it came from."""
    rgb: Image
    mask: Mask
    crop: Optional[BBox] = None

    def __post_init__(self):
        expected = (ZOOM['height'], ZOOM['width'])
        if self.rgb.pixels.shape[:2] != expected or self.mask.bits.shape != expected:
            raise ValidationError(
                f"Observation must be {ZOOM['width']}x{ZOOM['height']}, "
                f"got rgb {self.rgb.pixels.shape[:2]} mask {self.mask.bits.shape}")


@dataclass(frozen=True)
class Scene:
    """A synthetic scene; doubles as the handle granting oracle access to the true pose."""
    mesh_id: str
    true_pose: Pose
    cam: CameraIntrinsics
    rng_seed: int = 0
