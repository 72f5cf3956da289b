# modules/synth.py

"""
Synthetic scenes, datasets, trajectories and a simulated detector.

Every random draw comes from a numpy Generator seeded from (dataset seed,
record index), so records do not depend on generation order and two runs with
the same seed produce identical bytes.
"""

import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from posematch.config import DATASET, STANDARDIZATION, TRAINING, TRAJECTORY
from posematch.core.cache import cached_result
from posematch.core.exceptions import ExperimentError, ValidationError, handle_exceptions
from posematch.core.model import (
    BBox,
    CameraIntrinsics,
    Image,
    Mask,
    Observation,
    Pose,
    RenderOutput,
    Scene,
    TriangleMesh,
    UnitQuaternion,
)
from posematch.modules.camera_raster import (
    bbox_from_mask,
    dilate_mask,
    write_bboxes_csv,
    write_pgm,
    write_ppm,
    zoom_observation,
)
from posematch.modules.matcher import Estimator, loss_mv, loss_sv, multi_view_initialize
from posematch.modules.pose_core import (
    StandardizationStats,
    quat_angle_deg,
    quat_compose,
    relative_pose_vector,
    slerp,
    standardize,
)
from posematch.modules.refine_track import STREAM_MULTI_VIEW, STREAM_REFINE, apply_estimate, query_estimator
from posematch.modules.renderer import render

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetSpec:
    n_samples: int = DATASET['n_samples']
    mask_dilate_max: int = DATASET['mask_dilate_max']
    bbox_jitter_px: float = DATASET['bbox_jitter_px']
    depth_range: Tuple[float, float] = DATASET['depth_range']
    seed: int = DATASET['seed']
    viewport_fraction: float = DATASET['viewport_fraction']

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValidationError(f"n_samples must be at least 1, got {self.n_samples}")
        if self.mask_dilate_max < 0:
            raise ValidationError(f"mask_dilate_max must be non-negative, got {self.mask_dilate_max}")
        if self.bbox_jitter_px < 0:
            raise ValidationError("bbox_jitter_px must be non-negative")
        z_min, z_max = self.depth_range
        if not 0 < z_min <= z_max:
            raise ValidationError(f"depth_range must satisfy 0 < z_min <= z_max, got {self.depth_range}")
        object.__setattr__(self, 'depth_range', (float(z_min), float(z_max)))

    def to_dict(self) -> dict:
        return {'n_samples': self.n_samples, 'mask_dilate_max': self.mask_dilate_max,
                'bbox_jitter_px': self.bbox_jitter_px, 'depth_range': list(self.depth_range),
                'seed': self.seed, 'viewport_fraction': self.viewport_fraction}

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetSpec":
        known = {k: data[k] for k in cls().to_dict() if k in data}
        if 'depth_range' in known:
            known['depth_range'] = tuple(known['depth_range'])
        return cls(**known)


@dataclass
class Trajectory:
    """Poses of a tracked object, one per frame; flagged frames are injected jumps."""
    poses: List[Pose]
    max_step_deg: float
    max_step_m: float
    discontinuities: FrozenSet[int] = frozenset()

    def __len__(self) -> int:
        return len(self.poses)

    def step_angles_deg(self) -> np.ndarray:
        return np.array([quat_angle_deg(a.rotation, b.rotation) for a, b in zip(self.poses, self.poses[1:])])

    def step_translations_m(self) -> np.ndarray:
        return np.array([np.linalg.norm(b.translation_array() - a.translation_array())
                         for a, b in zip(self.poses, self.poses[1:])])


@dataclass
class SyntheticRecord:
    """One rendered sample: the scene, its zoomed observation and detection box, plus the full-frame rasters."""
    scene: Scene
    observation: Observation
    bbox: BBox
    image: Image
    mask: Mask

    def __iter__(self):
        return iter((self.scene, self.observation, self.bbox))


def record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _random_axis(rng: np.random.Generator) -> np.ndarray:
    axis = rng.standard_normal(3)
    while np.linalg.norm(axis) < 1e-12:
        axis = rng.standard_normal(3)
    return axis / np.linalg.norm(axis)


def sample_uniform_rotation(rng: np.random.Generator) -> UnitQuaternion:
    """Uniform rotation from three uniform variates (subgroup algorithm)."""
    u1, u2, u3 = rng.random(3)
    r1 = np.sqrt(1.0 - u1)
    r2 = np.sqrt(u1)
    t1 = 2.0 * np.pi * u2
    t2 = 2.0 * np.pi * u3
    q = np.array([np.cos(t2) * r2, np.sin(t1) * r1, np.cos(t1) * r1, np.sin(t2) * r2])
    return UnitQuaternion.from_array(q / np.linalg.norm(q))


def sample_pose_in_frustum(cam: CameraIntrinsics, depth_range: Tuple[float, float],
                           mesh: Optional[TriangleMesh], rng: np.random.Generator,
                           viewport_fraction: float = DATASET['viewport_fraction']) -> Pose:
    """
    Uniform rotation, depth uniform in depth_range, and an object center that
    projects inside the central viewport_fraction of the image. The margin also
    covers the object's bounding sphere so the whole object stays in view.
    """
    z_min, z_max = depth_range
    if not z_min > 0:
        raise ValidationError(f"z_min must be positive, got {z_min}")
    rotation = sample_uniform_rotation(rng)
    z = float(rng.uniform(z_min, z_max))

    radius = mesh.diameter / 2.0 if mesh is not None else 0.0
    # Off-axis centers see the sphere stretched by up to sqrt(1 + (t_lateral / z)^2)
    slope_u = max(cam.px, cam.width - cam.px) / cam.fx
    slope_v = max(cam.py, cam.height - cam.py) / cam.fy
    reach = radius / max(z - radius, 1e-6)
    margin_u = min(max((1.0 - viewport_fraction) / 2.0 * cam.width, cam.fx * reach * np.hypot(1.0, slope_u)),
                   cam.width / 2.0)
    margin_v = min(max((1.0 - viewport_fraction) / 2.0 * cam.height, cam.fy * reach * np.hypot(1.0, slope_v)),
                   cam.height / 2.0)
    u = float(rng.uniform(margin_u, cam.width - margin_u))
    v = float(rng.uniform(margin_v, cam.height - margin_v))
    translation = (z * (u - cam.px) / cam.fx, z * (v - cam.py) / cam.fy, z)
    return Pose(rotation=rotation, translation=translation)


def perturb_pose(p: Pose, max_angle_deg: float, max_trans_m: float, rng: np.random.Generator) -> Pose:
    """Random-axis rotation of angle U[0, max_angle_deg] plus a translation offset in the L-inf ball."""
    if max_angle_deg < 0 or max_trans_m < 0:
        raise ValidationError("Perturbation bounds must be non-negative")
    axis = _random_axis(rng)
    angle = float(rng.uniform(0.0, max_angle_deg))
    offset = rng.uniform(-max_trans_m, max_trans_m, 3)
    if max_angle_deg == 0 and max_trans_m == 0:
        return p
    rotation = quat_compose(UnitQuaternion.from_axis_angle(axis, angle), p.rotation)
    return Pose(rotation=rotation, translation=tuple(p.translation_array() + offset))


def generate_trajectory(start: Pose, n_frames: int = TRAJECTORY['n_frames'],
                        max_step_deg: float = TRAJECTORY['max_step_deg'],
                        max_step_m: float = TRAJECTORY['max_step_m'],
                        rng: Optional[np.random.Generator] = None,
                        discontinuities: Sequence[Tuple[int, float]] = (),
                        min_step_deg: float = TRAJECTORY['min_step_deg'],
                        segment_frames: Tuple[int, int] = TRAJECTORY['segment_frames'],
                        wander_m: float = TRAJECTORY['wander_m']) -> Trajectory:
    """
    Smooth random motion starting at start.

    The rotation moves in segments: each segment slerps toward a waypoint at a
    constant speed drawn from [min_step_deg, max_step_deg] per frame. The
    translation walks toward waypoints near the start position, at most
    max_step_m per frame. At every (frame, jump_deg) in discontinuities the
    rotation jumps by exactly jump_deg about a random axis and the frame is flagged.
    """
    if n_frames < 1:
        raise ValidationError(f"n_frames must be at least 1, got {n_frames}")
    if not 0 <= min_step_deg <= max_step_deg:
        raise ValidationError("Need 0 <= min_step_deg <= max_step_deg")
    rng = rng if rng is not None else np.random.default_rng(0)
    jumps: Dict[int, float] = {int(f): float(d) for f, d in discontinuities}
    for frame in jumps:
        if not 1 <= frame < n_frames:
            raise ValidationError(f"Discontinuity frame {frame} outside 1..{n_frames - 1}")

    anchor = start.translation_array()
    poses = [start]
    seg_start, seg_goal, seg_len, seg_pos = start.rotation, start.rotation, 0, 0
    t_goal = anchor

    for frame in range(1, n_frames):
        prev = poses[-1]
        if frame in jumps:
            jump = UnitQuaternion.from_axis_angle(_random_axis(rng), jumps[frame])
            poses.append(Pose(rotation=quat_compose(jump, prev.rotation), translation=prev.translation))
            seg_len = seg_pos = 0
            continue

        if seg_pos >= seg_len:
            speed = float(rng.uniform(min_step_deg, max_step_deg))
            seg_len = int(rng.integers(segment_frames[0], segment_frames[1] + 1))
            if speed > 0:
                seg_len = max(1, min(seg_len, int(TRAJECTORY['max_segment_deg'] // speed)))
            seg_start = prev.rotation
            seg_goal = quat_compose(UnitQuaternion.from_axis_angle(_random_axis(rng), speed * seg_len), seg_start)
            seg_pos = 0
            t_goal = anchor + rng.uniform(-wander_m, wander_m, 3)

        seg_pos += 1
        rotation = slerp(seg_start, seg_goal, seg_pos / seg_len)

        t_prev = prev.translation_array()
        towards = t_goal - t_prev
        distance = float(np.linalg.norm(towards))
        if distance > max_step_m:
            towards = towards * (max_step_m / distance)
        poses.append(Pose(rotation=rotation, translation=tuple(t_prev + towards)))

    return Trajectory(poses=poses, max_step_deg=max_step_deg, max_step_m=max_step_m,
                      discontinuities=frozenset(jumps))


def simulate_detection(render_out: RenderOutput, spec: DatasetSpec,
                       rng: np.random.Generator) -> Tuple[BBox, Mask]:
    """
    Corrupt a rendered mask the way a detector would.

    The mask is dilated with a square kernel of size k ~ U{0..mask_dilate_max};
    the box is the tight box of the clean mask with every edge jittered by
    N(0, bbox_jitter_px) and clamped back into the image.
    """
    tight = bbox_from_mask(render_out.mask)
    k = int(rng.integers(0, spec.mask_dilate_max + 1))
    mask = dilate_mask(render_out.mask, k)

    if spec.bbox_jitter_px == 0:
        return tight, mask

    width, height = render_out.mask.width, render_out.mask.height
    x1, y1, x2, y2 = np.array([tight.x, tight.y, tight.x2, tight.y2]) + rng.normal(0.0, spec.bbox_jitter_px, 4)
    x1, x2 = np.clip(sorted((x1, x2)), 0.0, width)
    y1, y2 = np.clip(sorted((y1, y2)), 0.0, height)
    # Manter pelo menos um pixel de extensão
    if x2 - x1 < 1.0:
        x1 = min(x1, width - 1.0)
        x2 = x1 + 1.0
    if y2 - y1 < 1.0:
        y1 = min(y1, height - 1.0)
        y2 = y1 + 1.0
    return BBox(float(x1), float(y1), float(x2 - x1), float(y2 - y1)), mask


def render_record(mesh: TriangleMesh, pose: Pose, cam: CameraIntrinsics, spec: DatasetSpec,
                  rng: np.random.Generator, index: int = 0) -> SyntheticRecord:
    """Render a pose, simulate its detection and zoom into it."""
    out = render(mesh, pose, cam)
    bbox, mask = simulate_detection(out, spec, rng)
    observation = zoom_observation(out.rgb, mask, bbox)
    scene = Scene(mesh_id=mesh.name, true_pose=pose, cam=cam, rng_seed=index)
    return SyntheticRecord(scene=scene, observation=observation, bbox=bbox, image=out.rgb, mask=mask)


def generate_dataset(mesh: TriangleMesh, spec: DatasetSpec, cam: CameraIntrinsics) -> List[SyntheticRecord]:
    """n_samples records: frustum pose, render, simulated detection, zoom-in."""
    records = []
    for index in range(spec.n_samples):
        rng = record_rng(spec.seed, index)
        pose = sample_pose_in_frustum(cam, spec.depth_range, mesh, rng, spec.viewport_fraction)
        records.append(render_record(mesh, pose, cam, spec, rng, index))
    logger.info(f"Generated {len(records)} synthetic records for mesh '{mesh.name}'")
    return records


@handle_exceptions(ExperimentError, "Error writing dataset")
def write_dataset(records: Sequence[SyntheticRecord], out_dir: str, spec: DatasetSpec) -> None:
    """Write scenes.json, rgb_NNNN.ppm / mask_NNNN.pgm per record and boxes.csv."""
    os.makedirs(out_dir, exist_ok=True)
    scenes = []
    for index, record in enumerate(records):
        pose = record.scene.true_pose
        scenes.append({
            'index': index,
            'mesh_id': record.scene.mesh_id,
            'rng_seed': record.scene.rng_seed,
            'rotation': list(pose.rotation.as_array()),
            'translation': list(pose.translation),
        })
        write_ppm(record.image, os.path.join(out_dir, f"rgb_{index:04d}.ppm"))
        write_pgm(record.mask, os.path.join(out_dir, f"mask_{index:04d}.pgm"))
    cam = records[0].scene.cam.to_dict() if records else None
    with open(os.path.join(out_dir, 'scenes.json'), 'w') as f:
        json.dump({'dataset': spec.to_dict(), 'cam': cam, 'scenes': scenes}, f, indent=2, sort_keys=True)
    write_bboxes_csv([r.bbox for r in records], os.path.join(out_dir, 'boxes.csv'))
    logger.info(f"Wrote {len(records)} records to {out_dir}")


# Estatísticas dos alvos de regressão

def relative_pose_pool(n: int, seed: int, cam: CameraIntrinsics,
                       max_angle_deg: float = STANDARDIZATION['max_angle_deg'],
                       max_trans_m: float = STANDARDIZATION['max_trans_m'],
                       depth_range: Tuple[float, float] = DATASET['depth_range']) -> np.ndarray:
    """(n, 7) pool of relative-pose vectors between frustum poses and their perturbations."""
    rows = np.empty((n, 7))
    for index in range(n):
        rng = record_rng(seed, index)
        src = sample_pose_in_frustum(cam, depth_range, None, rng)
        tgt = perturb_pose(src, max_angle_deg, max_trans_m, rng)
        vec = relative_pose_vector(src, tgt, cam)
        # One sign per rotation so the quaternion statistics are not washed out
        if vec[0] < 0:
            vec[:4] = -vec[:4]
        rows[index] = vec
    return rows


@cached_result("standardization")
def _standardization_stats_dict(pool_size: int, seed: int, max_angle_deg: float,
                                max_trans_m: float, cam: dict) -> dict:
    pool = relative_pose_pool(pool_size, seed, CameraIntrinsics.from_dict(cam), max_angle_deg, max_trans_m)
    return StandardizationStats.fit(pool).to_dict()


def compute_standardization_stats(cam: CameraIntrinsics,
                                  pool_size: int = STANDARDIZATION['pool_size'],
                                  seed: int = STANDARDIZATION['seed'],
                                  max_angle_deg: float = STANDARDIZATION['max_angle_deg'],
                                  max_trans_m: float = STANDARDIZATION['max_trans_m']) -> StandardizationStats:
    """Fit zero-mean / unit-variance statistics on a relative-pose pool (cached)."""
    data = _standardization_stats_dict(pool_size=pool_size, seed=seed, max_angle_deg=max_angle_deg,
                                       max_trans_m=max_trans_m, cam=cam.to_dict())
    return StandardizationStats.from_dict(data)


@dataclass(frozen=True)
class TrainingSchedule:
    restart_angle_deg: float = TRAINING['restart_angle_deg']
    resample_max_deg: float = TRAINING['resample_max_deg']
    resample_max_m: float = TRAINING['resample_max_m']
    refine_iters: int = TRAINING['refine_iters']


def generate_training_samples(mesh: TriangleMesh, spec: DatasetSpec, cam: CameraIntrinsics,
                              estimator: Estimator, stats: StandardizationStats,
                              schedule: Optional[TrainingSchedule] = None) -> List[Dict]:
    """
    Training rows for the joint initialization + refinement schedule.

    Per record: multi-view initialization; when its rotation error exceeds
    restart_angle_deg a fresh start is drawn as a small perturbation of the
    true pose; then refine_iters refinement iterations. Each iteration yields a
    row with the standardized regression target and the losses of the
    estimator's output against it.
    """
    schedule = schedule or TrainingSchedule()
    rows: List[Dict] = []
    for record in generate_dataset(mesh, spec, cam):
        index = record.scene.rng_seed
        truth = record.scene.true_pose
        rng = record_rng(spec.seed + 1, index)

        pose = multi_view_initialize(record.observation, record.bbox, mesh, cam, estimator,
                                     record.scene, stream_key=(index, STREAM_MULTI_VIEW))
        resampled = quat_angle_deg(pose.rotation, truth.rotation) > schedule.restart_angle_deg
        if resampled:
            pose = perturb_pose(truth, schedule.resample_max_deg, schedule.resample_max_m, rng)

        for iteration in range(schedule.refine_iters):
            target = relative_pose_vector(pose, truth, cam)
            theta = quat_angle_deg(pose.rotation, truth.rotation)
            out = query_estimator(pose, record.observation, mesh, cam, estimator, record.scene,
                                  (index, STREAM_REFINE, iteration))
            row = {'record': index, 'iteration': iteration, 'resampled': resampled,
                   'theta': theta, 'theta_hat': out.theta_hat,
                   'loss_mv': loss_mv(target[:4], target[4:], out.q_hat, out.v_hat),
                   'loss_sv': loss_sv(target[:4], target[4:], out.q_hat, out.v_hat, theta, out.theta_hat)}
            for name, value in zip(('qw', 'qx', 'qy', 'qz', 'vx', 'vy', 'vz'), standardize(target, stats)):
                row[f"target_{name}"] = float(value)
            rows.append(row)
            pose = apply_estimate(pose, out, cam)

    logger.info(f"Generated {len(rows)} training rows from {spec.n_samples} records")
    return rows


__all__ = [
    'DatasetSpec', 'Trajectory', 'SyntheticRecord', 'record_rng', 'sample_uniform_rotation',
    'sample_pose_in_frustum', 'perturb_pose', 'generate_trajectory', 'simulate_detection',
    'render_record', 'generate_dataset', 'write_dataset', 'relative_pose_pool',
    'compute_standardization_stats', 'TrainingSchedule', 'generate_training_samples',
]
