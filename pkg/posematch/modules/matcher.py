# modules/matcher.py

"""
Pose-difference estimation.

An estimator looks at a zoomed target observation and a render at a hypothesis
pose and returns the relative rotation (raw quaternion), the untangled relative
translation and the angle distance between the two. No network is trained here:
the estimators are oracles with access to the scene's true pose, optionally
contracted toward the hypothesis and perturbed with seeded Gaussian noise.

Also holds the multi-view initializer and the two training losses with their
analytic gradients.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Protocol, Tuple

import numpy as np

from posematch.config import ESTIMATOR_NAMES, GRADIENT_CHECK, LOSS, NOISE, PROPORTIONAL_NOISE, ZOOM
from posematch.core.exceptions import (
    ConfigurationError,
    MissingSceneHandle,
    NonDifferentiablePoint,
    ValidationError,
    ZeroNormQuaternion,
)
from posematch.core.model import (
    BBox,
    CameraIntrinsics,
    Image,
    Observation,
    Pose,
    RawQuaternion,
    Scene,
    TriangleMesh,
    UnitQuaternion,
    UntangledDelta,
)
from posematch.modules.camera_raster import (
    estimate_depth_from_bbox,
    expand_bbox_to_ratio,
    infer_translation_from_bbox,
    zoom_crop,
    zoom_mask,
)
from posematch.modules.pose_core import (
    ZERO_NORM_THRESHOLD,
    entangle,
    quat_angle_deg,
    quat_compose,
    quat_normalize,
    relative_rotation,
    slerp,
    untangle,
)
from posematch.modules.renderer import canonical_views, render

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorOutput:
    """Relative rotation q_hat (unnormalized), untangled translation v_hat and angle distance theta_hat (degrees)."""
    q_hat: RawQuaternion
    v_hat: UntangledDelta
    theta_hat: float

    def __post_init__(self):
        if not (np.isfinite(self.theta_hat) and self.theta_hat >= 0):
            raise ValidationError(f"theta_hat must be finite and non-negative, got {self.theta_hat}")
        if not self.q_hat.norm > 0:
            raise ZeroNormQuaternion("Estimator returned a zero quaternion")


@dataclass(eq=False)
class MatchQuery:
    """
    One estimator call: target vs. render at rendered_pose.

    stream_key selects the random stream of noisy estimators; controllers pass
    (record, frame, iteration)-style integers so results never depend on call order.
    """
    target: Observation
    rendered: Observation
    rendered_pose: Pose
    cam: CameraIntrinsics
    scene_handle: Optional[Scene] = None
    stream_key: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.rendered_pose.z > 0:
            raise ValidationError(f"Rendered pose needs positive depth, got z={self.rendered_pose.z}")


@dataclass(frozen=True)
class NoiseModel:
    """Contraction toward the true delta plus Gaussian noise on rotation, translation and theta."""
    gamma: float = NOISE['gamma']
    sigma_rot_deg: float = NOISE['sigma_rot_deg']
    sigma_trans_m: float = NOISE['sigma_trans_m']
    sigma_theta_deg: float = NOISE['sigma_theta_deg']
    proportional: bool = NOISE['proportional']
    seed: int = NOISE['seed']

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if min(self.sigma_rot_deg, self.sigma_trans_m, self.sigma_theta_deg) < 0:
            raise ValidationError("Noise scales must be non-negative")

    @property
    def noiseless(self) -> bool:
        return self.sigma_rot_deg == 0 and self.sigma_trans_m == 0 and self.sigma_theta_deg == 0

    def to_dict(self) -> dict:
        return {'gamma': self.gamma, 'sigma_rot_deg': self.sigma_rot_deg,
                'sigma_trans_m': self.sigma_trans_m, 'sigma_theta_deg': self.sigma_theta_deg,
                'proportional': self.proportional, 'seed': self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseModel":
        known = {k: data[k] for k in cls().to_dict() if k in data}
        return cls(**known)


class Estimator(Protocol):
    """Any pose-difference estimator; must be deterministic given its configuration and seed."""
    name: str
    # False quando o estimador só usa a cena (oráculo): os renders não fazem zoom RGB
    reads_pixels: bool

    def estimate(self, query: MatchQuery) -> EstimatorOutput:
        ...


def _random_axis(rng: np.random.Generator) -> np.ndarray:
    axis = rng.standard_normal(3)
    norm = np.linalg.norm(axis)
    while norm < 1e-12:
        axis = rng.standard_normal(3)
        norm = np.linalg.norm(axis)
    return axis / norm


def oracle_estimate(query: MatchQuery, noise: NoiseModel) -> EstimatorOutput:
    """
    True relative pose from the rendered pose to the scene's pose, contracted by
    gamma and perturbed by noise whose scale grows with the true residual when
    noise.proportional is set.
    """
    if query.scene_handle is None:
        raise MissingSceneHandle("Oracle estimators need the scene handle of the query")
    rendered = query.rendered_pose
    truth = query.scene_handle.true_pose

    delta_rot = relative_rotation(rendered.rotation, truth.rotation)
    delta_v = untangle(rendered, truth, query.cam).as_array()
    theta = quat_angle_deg(rendered.rotation, truth.rotation)

    if noise.proportional:
        scale = theta / PROPORTIONAL_NOISE['scale_deg'] + PROPORTIONAL_NOISE['floor']
    else:
        scale = 1.0

    rotation = delta_rot if noise.gamma == 1.0 else slerp(UnitQuaternion.identity(), delta_rot, noise.gamma)
    v_hat = noise.gamma * delta_v
    theta_hat = theta

    if not noise.noiseless:
        rng = np.random.default_rng([noise.seed, *query.stream_key])
        # Draw order is fixed so a given stream sees the same normals for any sigma
        axis = _random_axis(rng)
        z_rot, z_trans, z_theta = rng.standard_normal(), rng.standard_normal(3), rng.standard_normal()

        if noise.sigma_rot_deg > 0:
            wobble = UnitQuaternion.from_axis_angle(axis, z_rot * noise.sigma_rot_deg * scale)
            rotation = quat_compose(wobble, rotation)
        if noise.sigma_trans_m > 0:
            # Translation noise is metric; perturb the implied target and re-untangle it
            implied = entangle(rendered, UnitQuaternion.identity(), UntangledDelta.from_array(v_hat), query.cam)
            noisy_t = implied.translation_array() + z_trans * noise.sigma_trans_m * scale
            noisy_t[2] = max(noisy_t[2], 1e-6)
            noisy = Pose(rotation=rendered.rotation, translation=tuple(noisy_t))
            v_hat = untangle(rendered, noisy, query.cam).as_array()
        theta_hat = max(0.0, theta + z_theta * noise.sigma_theta_deg * scale)

    return EstimatorOutput(q_hat=rotation.to_raw(), v_hat=UntangledDelta.from_array(v_hat),
                           theta_hat=float(theta_hat))


@dataclass(frozen=True)
class OracleEstimator:
    """Estimator wrapper around oracle_estimate with a fixed noise model."""
    noise: NoiseModel = field(default_factory=NoiseModel)
    name: str = 'oracle'
    reads_pixels: bool = False

    def estimate(self, query: MatchQuery) -> EstimatorOutput:
        return oracle_estimate(query, self.noise)


def make_estimator(name: str, noise: Optional[NoiseModel] = None) -> OracleEstimator:
    """
    Build an estimator by name.

    'oracle'              exact delta and theta (noise ignored)
    'contraction'         gamma from the noise model, no noise
    'noisy-proportional'  the full noise model with proportional scaling
    """
    noise = noise or NoiseModel()
    if name == 'oracle':
        model = NoiseModel(gamma=1.0, seed=noise.seed)
    elif name == 'contraction':
        model = NoiseModel(gamma=noise.gamma, seed=noise.seed)
    elif name == 'noisy-proportional':
        model = replace(noise, proportional=True)
    else:
        raise ConfigurationError(f"Unknown estimator '{name}', expected one of {ESTIMATOR_NAMES}")
    return OracleEstimator(noise=model, name=name)


def needs_rgb(estimator: Estimator) -> bool:
    """Estimators without the flag are assumed to look at the images."""
    return bool(getattr(estimator, 'reads_pixels', True))


def render_observation(mesh: TriangleMesh, pose: Pose, cam: CameraIntrinsics, crop: BBox,
                       with_rgb: bool = True) -> Observation:
    """
    Render at pose and zoom with the target's crop box so both sides of a query share a frame.

    with_rgb=False leaves the zoomed RGB black; only the mask is resampled.
    """
    out = render(mesh, pose, cam)
    if with_rgb:
        zoomed, _ = zoom_crop(out.rgb, crop)
    else:
        zoomed = Image.blank(ZOOM['width'], ZOOM['height'])
    return Observation(rgb=zoomed, mask=zoom_mask(out.mask, crop), crop=crop)


@dataclass
class MultiViewResult:
    """Pose from multi-view initialization plus the per-view estimates behind it."""
    pose: Pose
    selected_view: int
    theta_hats: Tuple[float, ...]
    view_translation: Tuple[float, float, float]


def multi_view_initialize_detailed(target: Observation, bbox: BBox, mesh: TriangleMesh,
                                   cam: CameraIntrinsics, estimator: Estimator,
                                   scene_handle: Optional[Scene] = None,
                                   stream_key: Tuple[int, ...] = ()) -> MultiViewResult:
    """Multi-view initialization returning the selected view and every view's theta_hat."""
    depth = estimate_depth_from_bbox(bbox, mesh.diameter, cam)
    translation = infer_translation_from_bbox(bbox, cam, depth)
    crop = target.crop or expand_bbox_to_ratio(bbox, bounds=(cam.width, cam.height))
    with_rgb = needs_rgb(estimator)

    outputs = []
    for index, view in enumerate(canonical_views()):
        view_pose = Pose(rotation=view, translation=translation)
        rendered = render_observation(mesh, view_pose, cam, crop, with_rgb)
        query = MatchQuery(target=target, rendered=rendered, rendered_pose=view_pose, cam=cam,
                           scene_handle=scene_handle, stream_key=(*stream_key, index))
        outputs.append((view_pose, estimator.estimate(query)))

    theta_hats = tuple(out.theta_hat for _, out in outputs)
    best = int(np.argmin(theta_hats))
    view_pose, out = outputs[best]
    pose = entangle(view_pose, quat_normalize(out.q_hat), out.v_hat, cam)
    logger.debug(f"Multi-view init picked view {best} (theta_hat {theta_hats[best]:.3f} deg)")
    return MultiViewResult(pose=pose, selected_view=best, theta_hats=theta_hats, view_translation=translation)


def multi_view_initialize(target: Observation, bbox: BBox, mesh: TriangleMesh, cam: CameraIntrinsics,
                          estimator: Estimator, scene_handle: Optional[Scene] = None,
                          stream_key: Tuple[int, ...] = ()) -> Pose:
    """
    Initial pose from the six canonical views.

    The views are rendered at the translation back-projected from the box center;
    the view with the smallest estimated angle distance wins and its estimated
    delta is applied. The frontal view is the identity rotation, so the result is
    expressed relative to the frontal canonical frame.
    """
    return multi_view_initialize_detailed(target, bbox, mesh, cam, estimator,
                                          scene_handle, stream_key).pose


# Losses

def _loss_terms(q, t, q_hat, t_hat) -> Tuple[float, float, float, np.ndarray, np.ndarray, np.ndarray]:
    q = np.asarray(q.as_array() if hasattr(q, 'as_array') else q, dtype=float)
    q_hat = np.asarray(q_hat.as_array() if hasattr(q_hat, 'as_array') else q_hat, dtype=float)
    t = np.asarray(t.as_array() if hasattr(t, 'as_array') else t, dtype=float)
    t_hat = np.asarray(t_hat.as_array() if hasattr(t_hat, 'as_array') else t_hat, dtype=float)
    norm = float(np.linalg.norm(q_hat))
    if norm < ZERO_NORM_THRESHOLD:
        raise ZeroNormQuaternion(f"Loss needs a non-zero q_hat, got norm {norm:.3e}")
    unit = q_hat / norm
    dot = float(q @ unit)
    residual = t - t_hat
    return dot, norm, float(np.linalg.norm(residual)), unit, q, residual


def loss_mv(q, t, q_hat, t_hat, n_views: int = LOSS['n_views']) -> float:
    """
    Multi-view loss: (|1 - q.q_hat/|q_hat|| + |t - t_hat| + |1 - |q_hat||) / N.

    t is the regression target of the translation head (the untangled 3-vector).
    The rotation term is sign sensitive: q_hat = -q costs 2 before the 1/N factor.
    """
    if n_views < 1:
        raise ValidationError(f"n_views must be at least 1, got {n_views}")
    dot, norm, dist, *_ = _loss_terms(q, t, q_hat, t_hat)
    return (abs(1.0 - dot) + dist + abs(1.0 - norm)) / n_views


def loss_sv(q, t, q_hat, t_hat, theta: float, theta_hat: float) -> float:
    """Single-view loss: the multi-view terms without 1/N, plus |theta - theta_hat|."""
    dot, norm, dist, *_ = _loss_terms(q, t, q_hat, t_hat)
    return abs(1.0 - dot) + dist + abs(1.0 - norm) + abs(theta - theta_hat)


@dataclass
class LossGradient:
    """Gradient of a loss with respect to the estimator outputs."""
    d_q_hat: np.ndarray
    d_t_hat: np.ndarray
    d_theta_hat: float
    non_differentiable: bool = False
    kinks: Tuple[str, ...] = ()


def _abs_derivative(value: float, name: str, kinks: list) -> float:
    if abs(value) < LOSS['kink_tolerance']:
        kinks.append(name)
        return 0.0
    return float(np.sign(value))


def grad_loss(variant: str, q, t, q_hat, t_hat, theta: float = 0.0, theta_hat: float = 0.0,
              n_views: int = LOSS['n_views'], strict: bool = False) -> LossGradient:
    """
    Analytic gradient of loss_mv ('mv') or loss_sv ('sv') w.r.t. (q_hat, t_hat, theta_hat).

    At a kink of an absolute-value term (argument within 1e-9 of zero) that term
    contributes the zero subgradient and the point is flagged; strict=True raises
    NonDifferentiablePoint instead.
    """
    if variant not in ('mv', 'sv'):
        raise ValidationError(f"Unknown loss variant '{variant}'")
    dot, norm, dist, unit, q_arr, residual = _loss_terms(q, t, q_hat, t_hat)
    kinks: list = []

    # d(q . q_hat/|q_hat|)/d q_hat = (q - dot * unit) / |q_hat|
    d_dot = (q_arr - dot * unit) / norm
    d_q = -_abs_derivative(1.0 - dot, 'rotation', kinks) * d_dot
    d_q = d_q - _abs_derivative(1.0 - norm, 'norm', kinks) * unit

    if dist < LOSS['kink_tolerance']:
        kinks.append('translation')
        d_t = np.zeros(3)
    else:
        d_t = -residual / dist

    d_theta = 0.0
    if variant == 'sv':
        d_theta = -_abs_derivative(theta - theta_hat, 'theta', kinks)
    else:
        d_q = d_q / n_views
        d_t = d_t / n_views

    if kinks:
        message = f"Loss '{variant}' is not differentiable at this point ({', '.join(kinks)})"
        if strict:
            raise NonDifferentiablePoint(message)
        logger.warning(message)
    return LossGradient(d_q_hat=d_q, d_t_hat=d_t, d_theta_hat=d_theta,
                        non_differentiable=bool(kinks), kinks=tuple(kinks))


def finite_difference_gradient(variant: str, q, t, q_hat, t_hat, theta: float = 0.0,
                               theta_hat: float = 0.0, n_views: int = LOSS['n_views'],
                               h: float = GRADIENT_CHECK['h']) -> np.ndarray:
    """Central differences of the loss over the 8 parameters (q_hat 4, t_hat 3, theta_hat 1)."""
    params = np.concatenate([np.asarray(q_hat, dtype=float), np.asarray(t_hat, dtype=float), [theta_hat]])

    def evaluate(p: np.ndarray) -> float:
        if variant == 'mv':
            return loss_mv(q, t, p[:4], p[4:7], n_views)
        return loss_sv(q, t, p[:4], p[4:7], theta, p[7])

    grad = np.zeros_like(params)
    for i in range(len(params)):
        step = np.zeros_like(params)
        step[i] = h
        grad[i] = (evaluate(params + step) - evaluate(params - step)) / (2.0 * h)
    return grad


@dataclass
class GradientCheckReport:
    """Largest relative error between analytic and finite-difference gradients, per variant."""
    n_points: int
    h: float
    max_rel_error: Dict[str, float]
    rows: list

    @property
    def passed(self) -> bool:
        return all(err < GRADIENT_CHECK['rel_tolerance'] for err in self.max_rel_error.values())


def check_gradients(n_points: int = GRADIENT_CHECK['n_points'], seed: int = 0,
                    h: float = GRADIENT_CHECK['h']) -> GradientCheckReport:
    """Compare grad_loss with central differences at random points."""
    rng = np.random.default_rng(seed)
    rows = []
    worst = {'mv': 0.0, 'sv': 0.0}
    for index in range(n_points):
        q = quat_normalize(rng.standard_normal(4)).as_array()
        q_hat = rng.standard_normal(4) * rng.uniform(0.5, 2.0)
        t = rng.standard_normal(3)
        t_hat = rng.standard_normal(3)
        theta = rng.uniform(0.0, 180.0)
        theta_hat = rng.uniform(0.0, 180.0)
        for variant in ('mv', 'sv'):
            analytic = grad_loss(variant, q, t, q_hat, t_hat, theta, theta_hat)
            a = np.concatenate([analytic.d_q_hat, analytic.d_t_hat, [analytic.d_theta_hat]])
            fd = finite_difference_gradient(variant, q, t, q_hat, t_hat, theta, theta_hat, h=h)
            rel = float(np.linalg.norm(a - fd) / max(np.linalg.norm(a), np.linalg.norm(fd), 1e-12))
            worst[variant] = max(worst[variant], rel)
            rows.append({'point': index, 'variant': variant, 'rel_error': rel,
                         'non_differentiable': analytic.non_differentiable})
    logger.info(f"Gradient check over {n_points} points: max rel error {worst}")
    return GradientCheckReport(n_points=n_points, h=h, max_rel_error=worst, rows=rows)


__all__ = [
    'EstimatorOutput', 'MatchQuery', 'NoiseModel', 'Estimator', 'OracleEstimator',
    'oracle_estimate', 'make_estimator', 'needs_rgb', 'render_observation', 'MultiViewResult',
    'multi_view_initialize', 'multi_view_initialize_detailed',
    'loss_mv', 'loss_sv', 'LossGradient', 'grad_loss', 'finite_difference_gradient',
    'GradientCheckReport', 'check_gradients',
]
