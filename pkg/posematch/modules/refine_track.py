# modules/refine_track.py

"""
Iterative refinement and the frame-to-frame tracking state machine.

Refinement renders the object at the current estimate, asks the estimator for
the pose difference against the zoomed target and applies it, until the
estimated angle distance drops below a threshold. Tracking runs one estimator
call per frame and decides between holding, updating and restarting from the
multi-view initializer.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from posematch.config import REFINEMENT, TRACKING
from posematch.core.exceptions import EmptyInput, ValidationError
from posematch.core.model import BBox, CameraIntrinsics, Observation, Pose, Scene, TriangleMesh
from posematch.modules.matcher import (
    Estimator,
    EstimatorOutput,
    MatchQuery,
    multi_view_initialize,
    needs_rgb,
    render_observation,
)
from posematch.modules.pose_core import entangle, quat_normalize

logger = logging.getLogger(__name__)

# Stream tags keep estimator calls of one record/frame on distinct random streams
STREAM_MULTI_VIEW = 0
STREAM_REFINE = 1
STREAM_TRACK = 2


class StopReason(Enum):
    CONVERGED = "converged"
    EXHAUSTED_PICKED_BEST = "exhausted_picked_best"
    FIXED_BUDGET = "fixed_budget"


class TrackerEvent(Enum):
    INITIALIZED = "initialized"
    UPDATED = "updated"
    HELD = "held"
    RESTARTED = "restarted"


@dataclass(frozen=True)
class RefinementConfig:
    """
    t_ref_deg: stop once the estimated angle distance is below this.
    max_iters: estimator call budget.
    policy: 'threshold' (stop on t_ref_deg) or 'fixed' (always spend max_iters
            and return the pose after the last applied delta).
    """
    t_ref_deg: float = REFINEMENT['t_ref_deg']
    max_iters: int = REFINEMENT['max_iters']
    policy: str = REFINEMENT['policy']

    def __post_init__(self):
        if not self.t_ref_deg > 0:
            raise ValidationError(f"t_ref_deg must be positive, got {self.t_ref_deg}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.policy not in ('threshold', 'fixed'):
            raise ValidationError(f"Unknown refinement policy '{self.policy}'")

    def to_dict(self) -> dict:
        return {'t_ref_deg': self.t_ref_deg, 'max_iters': self.max_iters, 'policy': self.policy}

    @classmethod
    def from_dict(cls, data: dict) -> "RefinementConfig":
        return cls(**{k: data[k] for k in ('t_ref_deg', 'max_iters', 'policy') if k in data})


@dataclass(frozen=True)
class RefinementStep:
    pose: Pose
    theta_hat: float


@dataclass
class RefinementTrace:
    """Every (pose, theta_hat) measured during one refinement, the stop reason and the returned pose."""
    steps: List[RefinementStep]
    stop_reason: StopReason
    final_pose: Pose

    @property
    def n_calls(self) -> int:
        return len(self.steps)

    @property
    def theta_hats(self) -> List[float]:
        return [s.theta_hat for s in self.steps]

    def to_rows(self, record: int = 0) -> List[Dict]:
        rows = []
        for i, step in enumerate(self.steps):
            rows.append({'record': record, 'iteration': i, 'theta_hat': step.theta_hat,
                         'tx': step.pose.translation[0], 'ty': step.pose.translation[1],
                         'tz': step.pose.translation[2], 'stop_reason': self.stop_reason.value})
        return rows


def _crop_of(target: Observation, cam: CameraIntrinsics) -> BBox:
    # O fallback de tela inteira já é 4:3 para o sensor 640x480
    return target.crop or BBox(0.0, 0.0, float(cam.width), float(cam.height))


def query_estimator(pose: Pose, target: Observation, mesh: TriangleMesh, cam: CameraIntrinsics,
                    estimator: Estimator, scene_handle: Optional[Scene],
                    stream_key: Tuple[int, ...]) -> EstimatorOutput:
    rendered = render_observation(mesh, pose, cam, _crop_of(target, cam), needs_rgb(estimator))
    query = MatchQuery(target=target, rendered=rendered, rendered_pose=pose, cam=cam,
                       scene_handle=scene_handle, stream_key=stream_key)
    return estimator.estimate(query)


def apply_estimate(pose: Pose, out: EstimatorOutput, cam: CameraIntrinsics) -> Pose:
    return entangle(pose, quat_normalize(out.q_hat), out.v_hat, cam)


def refine(initial: Pose, target: Observation, mesh: TriangleMesh, cam: CameraIntrinsics,
           estimator: Estimator, cfg: Optional[RefinementConfig] = None,
           scene_handle: Optional[Scene] = None, stream_key: Tuple[int, ...] = ()) -> RefinementTrace:
    """
    Refine a pose estimate against a zoomed target.

    Args:
        initial: starting pose, positive depth.
        target: zoomed observation; renders are zoomed with its crop box.
        estimator: pose-difference estimator (carries its own noise model).
        cfg: thresholds and budget.
        scene_handle: oracle access to the true pose, when the estimator needs it.
        stream_key: prefix of the per-call random stream keys.

    Returns:
        RefinementTrace. Under the threshold policy the returned pose is the one
        measured below t_ref_deg, or else the earliest pose with the smallest
        recorded theta_hat.
    """
    cfg = cfg or RefinementConfig()
    if not initial.z > 0:
        raise ValidationError(f"Initial pose needs positive depth, got z={initial.z}")

    steps: List[RefinementStep] = []
    pose = initial
    for iteration in range(cfg.max_iters):
        out = query_estimator(pose, target, mesh, cam, estimator, scene_handle,
                              (*stream_key, STREAM_REFINE, iteration))
        steps.append(RefinementStep(pose=pose, theta_hat=out.theta_hat))
        logger.debug(f"Refinement step {iteration}: theta_hat {out.theta_hat:.4f} deg")

        if cfg.policy == 'threshold' and out.theta_hat < cfg.t_ref_deg:
            return RefinementTrace(steps=steps, stop_reason=StopReason.CONVERGED, final_pose=pose)
        pose = apply_estimate(pose, out, cam)

    if cfg.policy == 'fixed':
        return RefinementTrace(steps=steps, stop_reason=StopReason.FIXED_BUDGET, final_pose=pose)

    best = int(np.argmin([s.theta_hat for s in steps]))
    logger.warning(f"Refinement did not converge in {cfg.max_iters} iterations; "
                   f"picking step {best} (theta_hat {steps[best].theta_hat:.3f} deg)")
    return RefinementTrace(steps=steps, stop_reason=StopReason.EXHAUSTED_PICKED_BEST,
                           final_pose=steps[best].pose)


@dataclass(frozen=True)
class TrackerConfig:
    t_low_deg: float = TRACKING['t_low_deg']
    t_high_deg: float = TRACKING['t_high_deg']
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    refine_on_update: bool = TRACKING['refine_on_update']

    def __post_init__(self):
        if not 0 < self.t_low_deg < self.t_high_deg:
            raise ValidationError(
                f"Need 0 < t_low_deg < t_high_deg, got {self.t_low_deg} and {self.t_high_deg}")

    def to_dict(self) -> dict:
        return {'t_low_deg': self.t_low_deg, 't_high_deg': self.t_high_deg,
                'refinement': self.refinement.to_dict(), 'refine_on_update': self.refine_on_update}

    @classmethod
    def from_dict(cls, data: dict) -> "TrackerConfig":
        known = {k: data[k] for k in ('t_low_deg', 't_high_deg', 'refine_on_update') if k in data}
        if 'refinement' in data:
            known['refinement'] = RefinementConfig.from_dict(data['refinement'])
        return cls(**known)


@dataclass(frozen=True)
class TrackerState:
    """Pose estimate after a frame and what the state machine did to get it."""
    pose: Pose
    last_event: TrackerEvent
    frame_index: int
    theta_hat: Optional[float] = None
    refine_calls: int = 0

    def __post_init__(self):
        if not self.pose.z > 0:
            raise ValidationError(f"Tracker pose needs positive depth, got z={self.pose.z}")


def _initialize(frame_target: Observation, frame_bbox: BBox, mesh: TriangleMesh,
                cam: CameraIntrinsics, estimator: Estimator, refinement: RefinementConfig,
                scene_handle: Optional[Scene], frame_index: int) -> RefinementTrace:
    init = multi_view_initialize(frame_target, frame_bbox, mesh, cam, estimator, scene_handle,
                                 stream_key=(frame_index, STREAM_MULTI_VIEW))
    return refine(init, frame_target, mesh, cam, estimator, refinement, scene_handle,
                  stream_key=(frame_index,))


def track_step(state: TrackerState, frame_target: Observation, frame_bbox: BBox,
               mesh: TriangleMesh, cam: CameraIntrinsics, estimator: Estimator,
               cfg: Optional[TrackerConfig] = None,
               scene_handle: Optional[Scene] = None) -> TrackerState:
    """
    Advance the tracker by one frame.

    Above t_high_deg the tracker restarts from multi-view initialization plus a
    full refinement; below t_low_deg the pose is kept as is; otherwise the
    estimated delta is applied once (followed by a refinement when
    cfg.refine_on_update is set). Thresholds are strict.
    """
    cfg = cfg or TrackerConfig()
    frame_index = state.frame_index + 1
    out = query_estimator(state.pose, frame_target, mesh, cam, estimator, scene_handle, (frame_index, STREAM_TRACK))

    if out.theta_hat > cfg.t_high_deg:
        logger.info(f"Frame {frame_index}: theta_hat {out.theta_hat:.2f} deg above "
                    f"{cfg.t_high_deg} deg, restarting from multi-view initialization")
        trace = _initialize(frame_target, frame_bbox, mesh, cam, estimator, cfg.refinement,
                            scene_handle, frame_index)
        return TrackerState(pose=trace.final_pose, last_event=TrackerEvent.RESTARTED,
                            frame_index=frame_index, theta_hat=out.theta_hat, refine_calls=trace.n_calls)

    if out.theta_hat < cfg.t_low_deg:
        logger.debug(f"Frame {frame_index}: held (theta_hat {out.theta_hat:.3f} deg)")
        return TrackerState(pose=state.pose, last_event=TrackerEvent.HELD,
                            frame_index=frame_index, theta_hat=out.theta_hat)

    pose = apply_estimate(state.pose, out, cam)
    calls = 0
    if cfg.refine_on_update:
        trace = refine(pose, frame_target, mesh, cam, estimator, cfg.refinement, scene_handle,
                       stream_key=(frame_index,))
        pose, calls = trace.final_pose, trace.n_calls
    logger.debug(f"Frame {frame_index}: updated (theta_hat {out.theta_hat:.3f} deg)")
    return TrackerState(pose=pose, last_event=TrackerEvent.UPDATED, frame_index=frame_index,
                        theta_hat=out.theta_hat, refine_calls=calls)


def track_sequence(frames: Sequence[Tuple[Observation, BBox]], mesh: TriangleMesh,
                   cam: CameraIntrinsics, estimator: Estimator,
                   cfg: Optional[TrackerConfig] = None,
                   scene_handles: Optional[Sequence[Optional[Scene]]] = None) -> List[TrackerState]:
    """
    Track an object through a sequence of (zoomed observation, detection box) frames.

    Frame 0 is initialized with multi-view initialization and refinement; every
    later frame goes through track_step. scene_handles, when given, holds one
    handle per frame for oracle estimators.
    """
    if not frames:
        raise EmptyInput("Tracking needs at least one frame")
    cfg = cfg or TrackerConfig()
    handles = list(scene_handles) if scene_handles is not None else [None] * len(frames)
    if len(handles) != len(frames):
        raise ValidationError(f"Got {len(handles)} scene handles for {len(frames)} frames")

    target, bbox = frames[0]
    trace = _initialize(target, bbox, mesh, cam, estimator, cfg.refinement, handles[0], 0)
    state = TrackerState(pose=trace.final_pose, last_event=TrackerEvent.INITIALIZED, frame_index=0,
                         theta_hat=trace.steps[-1].theta_hat, refine_calls=trace.n_calls)
    states = [state]
    for (target, bbox), handle in zip(frames[1:], handles[1:]):
        state = track_step(state, target, bbox, mesh, cam, estimator, cfg, handle)
        states.append(state)

    counts = event_counts(states)
    logger.info(f"Tracked {len(states)} frames: {counts}")
    return states


def event_counts(states: Sequence[TrackerState]) -> Dict[str, int]:
    counts = {event.value: 0 for event in TrackerEvent}
    for state in states:
        counts[state.last_event.value] += 1
    return counts


__all__ = [
    'StopReason', 'TrackerEvent', 'RefinementConfig', 'RefinementStep', 'RefinementTrace',
    'query_estimator', 'apply_estimate', 'refine', 'TrackerConfig', 'TrackerState', 'track_step',
    'track_sequence', 'event_counts',
]
