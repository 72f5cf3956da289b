# modules/eval_harness.py

"""
The (n deg, n cm) metric, experiment configuration and benchmark orchestration.

Benchmarks are fully determined by the resolved ExperimentConfig: the same
config and seed give byte-identical CSV output.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import json5
import numpy as np
import pandas as pd

from posematch.config import CAMERA, DEFAULT_MESH, ESTIMATOR_NAMES, METRIC, REPORT, TRAJECTORY
from posematch.core.exceptions import (
    ConfigurationError,
    EmptyInput,
    ExperimentError,
    PoseMatchError,
    ValidationError,
    handle_exceptions,
)
from posematch.core.model import BBox, CameraIntrinsics, Mask, Pose, TriangleMesh, UnitQuaternion
from posematch.modules.camera_raster import ZoomTransform, dilate_mask
from posematch.modules.matcher import (
    NoiseModel,
    check_gradients,
    loss_mv,
    loss_sv,
    make_estimator,
    multi_view_initialize_detailed,
)
from posematch.modules.pose_core import entangle, quat_angle_deg, quat_compose, relative_rotation, untangle
from posematch.modules.refine_track import (
    STREAM_MULTI_VIEW,
    RefinementConfig,
    TrackerConfig,
    TrackerState,
    event_counts,
    refine,
    track_sequence,
)
from posematch.modules.renderer import canonical_views, load_ply, make_cube, make_icosphere, make_plate
from posematch.modules.synth import (
    DatasetSpec,
    Trajectory,
    generate_dataset,
    generate_trajectory,
    record_rng,
    render_record,
    sample_pose_in_frustum,
    sample_uniform_rotation,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoseError:
    rot_deg: float
    trans_cm: float

    def __post_init__(self):
        if not (np.isfinite(self.rot_deg) and np.isfinite(self.trans_cm)):
            raise ValidationError(f"Pose errors must be finite, got ({self.rot_deg}, {self.trans_cm})")
        if self.rot_deg < 0 or self.trans_cm < 0:
            raise ValidationError(f"Pose errors must be non-negative, got ({self.rot_deg}, {self.trans_cm})")


def pose_error(est: Pose, gt: Pose) -> PoseError:
    """Rotation angle distance in degrees and camera-frame translation distance in centimeters."""
    return PoseError(rot_deg=quat_angle_deg(est.rotation, gt.rotation),
                     trans_cm=100.0 * float(np.linalg.norm(est.translation_array() - gt.translation_array())))


def is_correct(err: PoseError, n: float) -> bool:
    """Correct iff the rotation error is below n degrees and the translation error below n cm."""
    if not n > 0:
        raise ValidationError(f"Threshold must be positive, got {n}")
    return err.rot_deg < n and err.trans_cm < n


@dataclass
class AccuracyReport:
    """Fraction of correct estimates per threshold n."""
    accuracy: Dict[float, float]
    n_samples: int
    config_digest: str = ""

    def to_frame(self, name: str = "") -> pd.DataFrame:
        rows = [{'name': name, 'n': n, 'accuracy': acc, 'n_samples': self.n_samples,
                 'config_digest': self.config_digest} for n, acc in sorted(self.accuracy.items())]
        return pd.DataFrame(rows, columns=['name', 'n', 'accuracy', 'n_samples', 'config_digest'])


def accuracy(errors: Sequence[PoseError], ns: Sequence[float] = METRIC['thresholds'],
             config_digest: str = "") -> AccuracyReport:
    """Fraction of errors that are correct at each n."""
    if not errors:
        raise EmptyInput("Accuracy needs at least one pose error")
    rot = np.array([e.rot_deg for e in errors])
    trans = np.array([e.trans_cm for e in errors])
    result = {}
    for n in ns:
        if not n > 0:
            raise ValidationError(f"Threshold must be positive, got {n}")
        result[n] = float(np.count_nonzero((rot < n) & (trans < n)) / len(errors))
    return AccuracyReport(accuracy=result, n_samples=len(errors), config_digest=config_digest)


# Experiment configuration

def _default_trajectory() -> dict:
    return {'n_frames': TRAJECTORY['n_frames'], 'max_step_deg': TRAJECTORY['max_step_deg'],
            'min_step_deg': TRAJECTORY['min_step_deg'], 'max_step_m': TRAJECTORY['max_step_m'],
            'discontinuities': [list(d) for d in TRAJECTORY['discontinuities']], 'seed': 0}


@dataclass
class ExperimentConfig:
    """
    Everything a benchmark needs. Missing keys in an experiment file fall back
    to the defaults in posematch.config.

    mesh is either {'path': 'model.ply'} (resolved relative to base_dir) or a
    built-in primitive such as {'kind': 'cube', 'edge': 0.1}.
    """
    name: str = "posematch"
    mesh: dict = field(default_factory=lambda: dict(DEFAULT_MESH))
    cam: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics.from_dict(CAMERA))
    estimator: str = "oracle"
    noise: NoiseModel = field(default_factory=NoiseModel)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    trajectory: dict = field(default_factory=_default_trajectory)
    out_dir: str = "results"
    baselines: List[dict] = field(default_factory=list)
    sweep_sigma_rot_deg: List[float] = field(default_factory=list)
    base_dir: str = "."

    def __post_init__(self):
        if self.estimator not in ESTIMATOR_NAMES:
            raise ConfigurationError(f"Unknown estimator '{self.estimator}', expected one of {ESTIMATOR_NAMES}")
        if 'path' in self.mesh:
            path = self.mesh_path
            if not os.path.exists(path):
                raise ConfigurationError(f"Mesh file not found: {path}")
        elif self.mesh.get('kind') not in ('cube', 'plate', 'icosphere'):
            raise ConfigurationError(f"Mesh needs a 'path' or a known 'kind', got {self.mesh}")
        if self.trajectory.get('n_frames', 1) < 1:
            raise ConfigurationError("trajectory.n_frames must be at least 1")

    @property
    def mesh_path(self) -> Optional[str]:
        if 'path' not in self.mesh:
            return None
        return os.path.join(self.base_dir, self.mesh['path'])

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'mesh': self.mesh,
            'cam': self.cam.to_dict(),
            'estimator': self.estimator,
            'noise': self.noise.to_dict(),
            'refinement': self.refinement.to_dict(),
            'tracker': self.tracker.to_dict(),
            'dataset': self.dataset.to_dict(),
            'trajectory': self.trajectory,
            'baselines': self.baselines,
            'sweep_sigma_rot_deg': self.sweep_sigma_rot_deg,
        }

    @property
    def digest(self) -> str:
        """md5 of the canonical JSON of the resolved configuration (output directory excluded)."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.md5(canonical.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "ExperimentConfig":
        try:
            kwargs = {'base_dir': base_dir}
            for key in ('name', 'estimator', 'out_dir'):
                if key in data:
                    kwargs[key] = data[key]
            if 'mesh' in data:
                kwargs['mesh'] = dict(data['mesh'])
            if 'cam' in data:
                kwargs['cam'] = CameraIntrinsics.from_dict({**CAMERA, **data['cam']})
            if 'noise' in data:
                kwargs['noise'] = NoiseModel.from_dict(data['noise'])
            if 'refinement' in data:
                kwargs['refinement'] = RefinementConfig.from_dict(data['refinement'])
            if 'tracker' in data:
                kwargs['tracker'] = TrackerConfig.from_dict(data['tracker'])
            if 'dataset' in data:
                kwargs['dataset'] = DatasetSpec.from_dict(data['dataset'])
            if 'trajectory' in data:
                trajectory = _default_trajectory()
                trajectory.update(data['trajectory'])
                trajectory['discontinuities'] = [list(d) for d in trajectory['discontinuities']]
                kwargs['trajectory'] = trajectory
            if 'baselines' in data:
                kwargs['baselines'] = list(data['baselines'])
            if 'sweep_sigma_rot_deg' in data:
                kwargs['sweep_sigma_rot_deg'] = [float(s) for s in data['sweep_sigma_rot_deg']]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError("Malformed experiment configuration", e)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid experiment configuration: {e.message}", e)
        return cls(**kwargs)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed replaced."""
        trajectory = dict(self.trajectory, seed=seed)
        return replace(self, noise=replace(self.noise, seed=seed),
                       dataset=replace(self.dataset, seed=seed), trajectory=trajectory)


@handle_exceptions(ConfigurationError, "Error loading experiment configuration")
def load_experiment_config(path: str, seed: Optional[int] = None) -> ExperimentConfig:
    """Read an experiment file (JSON; comments and trailing commas allowed)."""
    with open(path) as f:
        data = json5.load(f)
    if not isinstance(data, dict):
        raise ConfigurationError(f"Experiment file {path} must hold an object")
    cfg = ExperimentConfig.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))
    if seed is not None:
        cfg = cfg.with_seed(seed)
    logger.info(f"Loaded experiment '{cfg.name}' from {path} (digest {cfg.digest})")
    return cfg


def load_mesh(cfg: ExperimentConfig) -> TriangleMesh:
    """The configured mesh: a PLY file or a built-in primitive."""
    spec = cfg.mesh
    if cfg.mesh_path:
        return load_ply(cfg.mesh_path)
    kind = spec['kind']
    if kind == 'cube':
        return make_cube(spec.get('edge', DEFAULT_MESH['edge']))
    if kind == 'plate':
        return make_plate(spec.get('edge', DEFAULT_MESH['edge']), spec.get('thickness', 1e-3))
    return make_icosphere(spec.get('radius', DEFAULT_MESH['edge'] / 2.0), spec.get('subdivisions', 2))


def _write_csv(frame: pd.DataFrame, out_dir: str, filename: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, filename)
    frame.to_csv(path, index=False, float_format=REPORT['float_format'])
    return path


def _error_row(index: int, err: PoseError, extra: dict, ns: Sequence[float]) -> dict:
    row = {'record': index, 'rot_deg': err.rot_deg, 'trans_cm': err.trans_cm, **extra}
    for n in ns:
        row[f"correct_{n}"] = is_correct(err, n)
    return row


# Benchmarks

@dataclass
class EstimationResult:
    report: AccuracyReport
    errors: List[PoseError]
    error_rows: List[dict]
    trace_rows: List[dict]


def evaluate_estimation(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> EstimationResult:
    """
    Multi-view initialization + refinement on a generated dataset.

    When out_dir is given, errors.csv is flushed with whatever was computed
    before a failure and the error is re-raised as ExperimentError.
    """
    mesh = load_mesh(cfg)
    estimator = make_estimator(cfg.estimator, cfg.noise)
    ns = METRIC['thresholds']
    errors: List[PoseError] = []
    error_rows: List[dict] = []
    trace_rows: List[dict] = []

    try:
        records = generate_dataset(mesh, cfg.dataset, cfg.cam)
        for index, record in enumerate(records):
            init = multi_view_initialize_detailed(record.observation, record.bbox, mesh, cfg.cam, estimator,
                                                  record.scene, stream_key=(index, STREAM_MULTI_VIEW))
            trace = refine(init.pose, record.observation, mesh, cfg.cam, estimator, cfg.refinement,
                           record.scene, stream_key=(index,))
            truth = record.scene.true_pose
            err = pose_error(trace.final_pose, truth)
            errors.append(err)
            error_rows.append(_error_row(index, err, {
                'init_rot_deg': quat_angle_deg(init.pose.rotation, truth.rotation),
                'selected_view': init.selected_view,
                'n_calls': trace.n_calls,
                'stop_reason': trace.stop_reason.value,
            }, ns))
            trace_rows.extend(trace.to_rows(index))
            logger.debug(f"Record {index}: rot {err.rot_deg:.4f} deg, trans {err.trans_cm:.4f} cm")
    except PoseMatchError as e:
        if out_dir and error_rows:
            _write_csv(pd.DataFrame(error_rows), out_dir, 'errors.csv')
            logger.error(f"Benchmark failed after {len(error_rows)} records; partial errors.csv flushed")
        raise ExperimentError("Estimation benchmark failed", e)

    report = accuracy(errors, ns, cfg.digest)
    return EstimationResult(report=report, errors=errors, error_rows=error_rows, trace_rows=trace_rows)


def run_estimation_benchmark(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> AccuracyReport:
    """Run evaluate_estimation and write errors.csv, traces.csv, report.csv and summary.txt."""
    out_dir = out_dir or cfg.out_dir
    logger.info(f"Estimation benchmark '{cfg.name}': {cfg.dataset.n_samples} scenes, estimator {cfg.estimator}")
    result = evaluate_estimation(cfg, out_dir)

    _write_csv(pd.DataFrame(result.error_rows), out_dir, 'errors.csv')
    _write_csv(pd.DataFrame(result.trace_rows), out_dir, 'traces.csv')
    _write_csv(result.report.to_frame(cfg.name), out_dir, 'report.csv')
    with open(os.path.join(out_dir, 'summary.txt'), 'w') as f:
        f.write(summary_table(result.report, cfg.name, cfg.baselines) + "\n")

    if cfg.sweep_sigma_rot_deg:
        _write_csv(run_noise_sweep(cfg, cfg.sweep_sigma_rot_deg), out_dir, 'sweep.csv')

    for n, acc in sorted(result.report.accuracy.items()):
        logger.info(f"({n}, {n}) accuracy: {acc:.3f}")
    return result.report


def run_noise_sweep(cfg: ExperimentConfig, sigmas: Sequence[float]) -> pd.DataFrame:
    """
    Accuracy per rotation-noise level with proportional noise, everything else fixed.

    Com theta_hat exato e a política de limiar, a refinação só termina abaixo de
    t_ref e a precisão não depende de sigma_rot; use a política 'fixed' ou
    sigma_theta_deg > 0.
    """
    if cfg.refinement.policy == 'threshold' and cfg.noise.sigma_theta_deg == 0:
        logger.warning("Noise sweep with exact theta_hat under the threshold policy: "
                       "refinement always ends below t_ref, accuracy will not move with sigma_rot_deg")
    rows = []
    for sigma in sigmas:
        swept = replace(cfg, estimator='noisy-proportional',
                        noise=replace(cfg.noise, sigma_rot_deg=float(sigma), proportional=True))
        report = evaluate_estimation(swept).report
        row = {'sigma_rot_deg': float(sigma)}
        row.update({f"acc_{n}": acc for n, acc in sorted(report.accuracy.items())})
        rows.append(row)
        logger.info(f"Noise sweep sigma_rot_deg={sigma}: {report.accuracy}")
    return pd.DataFrame(rows)


@dataclass
class TrackingSummary:
    """Per-frame tracking errors and the event statistics of one sequence."""
    frame_rows: List[dict]
    events: Dict[str, int]
    mean_rot_deg: float
    max_rot_deg: float
    mean_trans_cm: float
    max_trans_cm: float
    states: List[TrackerState] = field(default_factory=list, repr=False)
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    def to_frame(self) -> pd.DataFrame:
        row = {**{f"n_{k}": v for k, v in self.events.items()},
               'mean_rot_deg': self.mean_rot_deg, 'max_rot_deg': self.max_rot_deg,
               'mean_trans_cm': self.mean_trans_cm, 'max_trans_cm': self.max_trans_cm}
        return pd.DataFrame([row])


def build_tracking_sequence(cfg: ExperimentConfig, mesh: TriangleMesh) -> Tuple[Trajectory, list]:
    """Trajectory from the configured parameters and one rendered record per frame."""
    params = cfg.trajectory
    seed = params.get('seed', 0)
    rng = record_rng(seed, 0)
    start = sample_pose_in_frustum(cfg.cam, cfg.dataset.depth_range, mesh, rng, cfg.dataset.viewport_fraction)
    trajectory = generate_trajectory(
        start, n_frames=params['n_frames'], max_step_deg=params['max_step_deg'],
        max_step_m=params['max_step_m'], rng=rng,
        discontinuities=[tuple(d) for d in params['discontinuities']],
        min_step_deg=params['min_step_deg'])
    records = [render_record(mesh, pose, cfg.cam, cfg.dataset, record_rng(seed, i + 1), i)
               for i, pose in enumerate(trajectory.poses)]
    return trajectory, records


def run_tracking_benchmark(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> TrackingSummary:
    """Track a synthetic trajectory and write tracking.csv and tracking_summary.csv."""
    out_dir = out_dir or cfg.out_dir
    mesh = load_mesh(cfg)
    estimator = make_estimator(cfg.estimator, cfg.noise)
    logger.info(f"Tracking benchmark '{cfg.name}': {cfg.trajectory['n_frames']} frames")

    try:
        trajectory, records = build_tracking_sequence(cfg, mesh)
        states = track_sequence([(r.observation, r.bbox) for r in records], mesh, cfg.cam, estimator,
                                cfg.tracker, [r.scene for r in records])
    except PoseMatchError as e:
        raise ExperimentError("Tracking benchmark failed", e)

    rows = []
    for state, truth in zip(states, trajectory.poses):
        err = pose_error(state.pose, truth)
        rows.append({'frame_index': state.frame_index, 'event': state.last_event.value,
                     'theta_hat': state.theta_hat, 'rot_err_deg': err.rot_deg,
                     'trans_err_m': err.trans_cm / 100.0,
                     'discontinuity': state.frame_index in trajectory.discontinuities})
    rot = np.array([r['rot_err_deg'] for r in rows])
    trans = np.array([r['trans_err_m'] for r in rows]) * 100.0
    summary = TrackingSummary(frame_rows=rows, events=event_counts(states),
                              mean_rot_deg=float(rot.mean()), max_rot_deg=float(rot.max()),
                              mean_trans_cm=float(trans.mean()), max_trans_cm=float(trans.max()),
                              states=states, trajectory=trajectory)

    _write_csv(pd.DataFrame(rows), out_dir, 'tracking.csv')
    _write_csv(summary.to_frame(), out_dir, 'tracking_summary.csv')
    logger.info(f"Tracking events {summary.events}; max rotation error {summary.max_rot_deg:.4f} deg")
    return summary


def summary_table(report: AccuracyReport, name: str, baselines: Sequence[dict] = ()) -> str:
    """
    Text table with one row per method and one column per threshold, labelled
    from REPORT['table_columns'] or "(n, n)" for thresholds it does not name.

    Baseline rows come from the config as {'name': ..., 'accuracy': {n: fraction}}.
    """
    labels = REPORT['table_columns']
    columns = [labels.get(n, f"({n}, {n})") for n in sorted(report.accuracy)]
    rows = []
    for baseline in baselines:
        values = {str(k): v for k, v in baseline.get('accuracy', {}).items()}
        rows.append([baseline.get('name', 'baseline')]
                    + [f"{100.0 * values[str(n)]:.1f}%" if str(n) in values else "-"
                       for n in sorted(report.accuracy)])
    rows.append([name] + [f"{100.0 * report.accuracy[n]:.1f}%" for n in sorted(report.accuracy)])
    frame = pd.DataFrame(rows, columns=['Method'] + columns)
    return frame.to_string(index=False)


# Self-test

def _check_oracle_exactness() -> bool:
    cfg = ExperimentConfig(name='selftest-oracle', dataset=DatasetSpec(n_samples=5, mask_dilate_max=0))
    result = evaluate_estimation(cfg)
    calls_ok = all(row['n_calls'] == 1 for row in result.error_rows)
    return calls_ok and all(acc == 1.0 for acc in result.report.accuracy.values())


def _check_contraction() -> bool:
    cfg = ExperimentConfig()
    mesh = load_mesh(cfg)
    truth = Pose(rotation=UnitQuaternion.identity(), translation=(0.0, 0.0, 0.5))
    record = render_record(mesh, truth, cfg.cam, DatasetSpec(mask_dilate_max=0), record_rng(0, 0))
    start = Pose(rotation=quat_compose(UnitQuaternion.from_axis_angle((0, 0, 1), 40.0), truth.rotation),
                 translation=truth.translation)
    estimator = make_estimator('contraction', NoiseModel(gamma=0.5))
    trace = refine(start, record.observation, mesh, cfg.cam, estimator, RefinementConfig(), record.scene)
    expected = [40.0, 20.0, 10.0, 5.0, 2.5, 1.25]
    return (trace.n_calls == 6 and trace.stop_reason.value == 'converged'
            and np.allclose(trace.theta_hats, expected, atol=1e-6))


def _check_losses() -> bool:
    q = np.array([1.0, 0.0, 0.0, 0.0])
    t = np.array([1.0, 2.0, 3.0])
    values_ok = (loss_mv(q, t, q, t) == 0.0 and loss_sv(q, t, q, t, 5.0, 5.0) == 0.0
                 and np.isclose(loss_mv(q, t, -q, t), 1.0 / 3.0, atol=1e-12)
                 and np.isclose(loss_sv(q, t, -q, t, 5.0, 5.0), 2.0, atol=1e-12))
    return values_ok and check_gradients(n_points=20, seed=0).passed


def _check_canonical_views() -> bool:
    angles = canonical_views().face_angles_deg()
    pairs = angles[np.triu_indices(len(angles), k=1)]
    on_grid = np.all(np.minimum(np.abs(pairs - 90.0), np.abs(pairs - 180.0)) < 1e-9)
    return bool(on_grid and len(pairs) == 15 and np.count_nonzero(np.abs(pairs - 180.0) < 1e-9) == 3)


def _check_round_trips() -> bool:
    cfg = ExperimentConfig()
    rng = np.random.default_rng(0)
    for _ in range(100):
        src = sample_pose_in_frustum(cfg.cam, (0.3, 2.0), None, rng)
        tgt = sample_pose_in_frustum(cfg.cam, (0.3, 2.0), None, rng)
        back = entangle(src, relative_rotation(src.rotation, tgt.rotation), untangle(src, tgt, cfg.cam), cfg.cam)
        err = pose_error(back, tgt)
        if err.rot_deg > 1e-9 or err.trans_cm > 1e-10:
            return False
    transform = ZoomTransform.from_bbox(BBox(100.0, 50.0, 200.0, 150.0))
    grid = np.stack(np.meshgrid(np.linspace(0, 640, 10), np.linspace(0, 480, 10)), axis=-1).reshape(-1, 2)
    return bool(np.max(np.abs(transform.apply_inverse(transform.apply(grid)) - grid)) < 1e-9)


def _check_metric() -> bool:
    rng = np.random.default_rng(0)
    errors = [PoseError(float(r), float(t)) for r, t in rng.uniform(0.0, 15.0, (1000, 2))]
    report = accuracy(errors)
    for n, acc in report.accuracy.items():
        recount = sum(1 for e in errors if e.rot_deg < n and e.trans_cm < n) / len(errors)
        if acc != recount:
            return False
    values = [report.accuracy[n] for n in sorted(report.accuracy)]
    return values == sorted(values)


def _check_tracking() -> bool:
    trajectory = dict(_default_trajectory(), n_frames=20, discontinuities=[[10, 30.0]])
    cfg = ExperimentConfig(name='selftest-track', dataset=DatasetSpec(mask_dilate_max=0), trajectory=trajectory)
    mesh = load_mesh(cfg)
    _, records = build_tracking_sequence(cfg, mesh)
    states = track_sequence([(r.observation, r.bbox) for r in records], mesh, cfg.cam,
                            make_estimator('oracle'), cfg.tracker, [r.scene for r in records])
    restarts = [s.frame_index for s in states if s.last_event.value == 'restarted']
    final = pose_error(states[-1].pose, records[-1].scene.true_pose)
    return restarts == [10] and final.rot_deg < 1e-6


def _check_sampling() -> bool:
    rng = np.random.default_rng(0)
    quats = np.array([sample_uniform_rotation(rng).as_array() for _ in range(20000)])
    angles = 2.0 * np.arctan2(np.linalg.norm(quats[:, 1:], axis=1), np.abs(quats[:, 0]))
    for p in (0.25, 0.5, 0.75):
        theta = np.quantile(angles, p)
        if abs((theta - np.sin(theta)) / np.pi - p) > 0.02:
            return False
    bits = np.zeros((60, 80), dtype=bool)
    bits[20:30, 30:35] = True
    masks = [dilate_mask(Mask(bits), k).bits for k in range(0, 12)]
    return all(np.all(a <= b) for a, b in zip(masks, masks[1:]))


SELFTEST_CHECKS = {
    'oracle_exactness': _check_oracle_exactness,
    'contraction_convergence': _check_contraction,
    'loss_correctness': _check_losses,
    'canonical_views': _check_canonical_views,
    'geometry_round_trips': _check_round_trips,
    'metric_recount': _check_metric,
    'tracking_state_machine': _check_tracking,
    'sampling': _check_sampling,
}


def selftest() -> Dict[str, bool]:
    """Run the built-in property checks at small scale; a check that raises counts as failed."""
    results = {}
    for name, check in SELFTEST_CHECKS.items():
        try:
            results[name] = bool(check())
        except PoseMatchError as e:
            logger.error(f"Self-test '{name}' raised: {e}")
            results[name] = False
        logger.info(f"Self-test {name}: {'PASS' if results[name] else 'FAIL'}")
    return results


__all__ = [
    'PoseError', 'pose_error', 'is_correct', 'AccuracyReport', 'accuracy',
    'ExperimentConfig', 'load_experiment_config', 'load_mesh',
    'EstimationResult', 'evaluate_estimation', 'run_estimation_benchmark', 'run_noise_sweep',
    'TrackingSummary', 'build_tracking_sequence', 'run_tracking_benchmark', 'summary_table',
    'SELFTEST_CHECKS', 'selftest',
]
