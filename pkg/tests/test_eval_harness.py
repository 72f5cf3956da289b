import filecmp
import time

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from posematch.core.exceptions import ConfigurationError, EmptyInput, ValidationError
from posematch.core.model import Pose, UnitQuaternion
from posematch.modules.eval_harness import (
    AccuracyReport,
    ExperimentConfig,
    PoseError,
    accuracy,
    evaluate_estimation,
    is_correct,
    load_experiment_config,
    load_mesh,
    pose_error,
    run_estimation_benchmark,
    run_noise_sweep,
    run_tracking_benchmark,
    selftest,
    summary_table,
)
from posematch.modules.matcher import NoiseModel
from posematch.modules.refine_track import RefinementConfig
from posematch.modules.renderer import make_cube, save_ply
from posematch.modules.synth import DatasetSpec
from strategies import finite, identity_pose

errors_lists = st.lists(
    st.builds(PoseError, rot_deg=st.floats(0.0, 20.0, **finite), trans_cm=st.floats(0.0, 20.0, **finite)),
    min_size=1, max_size=200)


class TestMetric:
    def test_pose_error_units(self) -> None:
        est = Pose(rotation=UnitQuaternion.from_axis_angle((1, 0, 0), 90.0), translation=(0.03, 0.04, 0.5))
        err = pose_error(est, identity_pose(0.5))
        assert err.rot_deg == pytest.approx(90.0)
        assert err.trans_cm == pytest.approx(5.0)

    def test_thresholds_are_strict(self) -> None:
        assert is_correct(PoseError(4.999, 4.999), 5)
        assert not is_correct(PoseError(5.0, 1.0), 5)
        assert not is_correct(PoseError(1.0, 5.0), 5)

    @pytest.mark.parametrize('n', [0, -2])
    def test_threshold_must_be_positive(self, n) -> None:
        with pytest.raises(ValidationError):
            is_correct(PoseError(1.0, 1.0), n)

    @pytest.mark.parametrize('rot, trans', [(-1.0, 0.0), (0.0, -0.5), (float('nan'), 0.0), (0.0, float('inf'))])
    def test_pose_error_must_be_finite_and_non_negative(self, rot: float, trans: float) -> None:
        with pytest.raises(ValidationError):
            PoseError(rot, trans)

    @given(errors=errors_lists)
    def test_accuracy_is_a_recount(self, *, errors) -> None:
        report = accuracy(errors)
        for n, acc in report.accuracy.items():
            assert acc == sum(1 for e in errors if is_correct(e, n)) / len(errors)
        values = [report.accuracy[n] for n in sorted(report.accuracy)]
        assert values == sorted(values)
        assert report.n_samples == len(errors)

    def test_accuracy_of_nothing(self) -> None:
        with pytest.raises(EmptyInput):
            accuracy([])

    def test_report_frame(self) -> None:
        report = AccuracyReport(accuracy={10: 1.0, 2: 0.5}, n_samples=4, config_digest='abc')
        frame = report.to_frame('run')
        assert list(frame.columns) == ['name', 'n', 'accuracy', 'n_samples', 'config_digest']
        assert list(frame['n']) == [2, 10]


class TestExperimentConfig:
    def test_defaults(self) -> None:
        cfg = ExperimentConfig()
        assert cfg.estimator == 'oracle'
        assert cfg.refinement == RefinementConfig()
        assert cfg.mesh_path is None

    def test_missing_keys_fall_back_to_defaults(self) -> None:
        cfg = ExperimentConfig.from_dict({'name': 'x', 'refinement': {'max_iters': 7},
                                          'trajectory': {'n_frames': 12, 'discontinuities': [(5, 30.0)]}})
        assert cfg.refinement == RefinementConfig(max_iters=7)
        assert cfg.trajectory['n_frames'] == 12
        assert cfg.trajectory['max_step_deg'] == 5.0
        assert cfg.trajectory['discontinuities'] == [[5, 30.0]]

    @pytest.mark.parametrize('data', [
        {'estimator': 'learned'},
        {'mesh': {'kind': 'teapot'}},
        {'mesh': {'path': 'missing.ply'}},
        {'refinement': {'max_iters': 0}},
        {'noise': {'gamma': 2.0}},
        {'cam': 'not-a-camera'},
        {'dataset': {'depth_range': 'far'}},
        {'trajectory': {'n_frames': 0}},
    ])
    def test_invalid_configurations(self, tmp_path, data) -> None:
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(data, base_dir=str(tmp_path))

    def test_digest_tracks_the_resolved_configuration(self) -> None:
        a = ExperimentConfig.from_dict({'name': 'x', 'out_dir': 'one'})
        b = ExperimentConfig.from_dict({'name': 'x', 'out_dir': 'two'})
        c = ExperimentConfig.from_dict({'name': 'x', 'refinement': {'t_ref_deg': 1.0}})
        assert a.digest == b.digest
        assert a.digest != c.digest
        assert len(a.digest) == 32

    def test_with_seed_replaces_every_seed(self) -> None:
        cfg = ExperimentConfig().with_seed(9)
        assert cfg.noise.seed == 9
        assert cfg.dataset.seed == 9
        assert cfg.trajectory['seed'] == 9

    def test_load_commented_file(self, tmp_path) -> None:
        save_ply(make_cube(0.05), str(tmp_path / 'small.ply'))
        path = tmp_path / 'exp.json'
        path.write_text("""
            // hand-written experiment
            {
              name: "small",
              mesh: {path: "small.ply"},
              dataset: {n_samples: 3,},
            }
        """)
        cfg = load_experiment_config(str(path), seed=4)
        assert cfg.name == 'small'
        assert cfg.dataset.n_samples == 3
        assert cfg.dataset.seed == 4
        assert load_mesh(cfg).diameter == pytest.approx(0.05 * np.sqrt(3.0))

    def test_load_rejects_non_object(self, tmp_path) -> None:
        path = tmp_path / 'exp.json'
        path.write_text('[1, 2, 3]')
        with pytest.raises(ConfigurationError):
            load_experiment_config(str(path))

    def test_load_reports_missing_file(self, tmp_path) -> None:
        with pytest.raises(ConfigurationError):
            load_experiment_config(str(tmp_path / 'nope.json'))

    @pytest.mark.parametrize('mesh, n_vertices', [({'kind': 'cube'}, 8), ({'kind': 'plate', 'edge': 0.1}, 8),
                                                  ({'kind': 'icosphere', 'subdivisions': 0}, 12)])
    def test_built_in_meshes(self, mesh, n_vertices: int) -> None:
        assert len(load_mesh(ExperimentConfig(mesh=mesh)).vertices) == n_vertices


def small_config(**overrides) -> ExperimentConfig:
    params = {'name': 'small', 'dataset': DatasetSpec(n_samples=3, mask_dilate_max=0),
              'refinement': RefinementConfig(max_iters=10)}
    params.update(overrides)
    return ExperimentConfig(**params)


class TestEstimationBenchmark:
    def test_oracle_is_always_correct(self) -> None:
        result = evaluate_estimation(small_config())
        assert all(acc == 1.0 for acc in result.report.accuracy.values())
        assert all(row['n_calls'] == 1 for row in result.error_rows)
        assert all(row['stop_reason'] == 'converged' for row in result.error_rows)
        assert len(result.trace_rows) == 3

    def test_outputs_are_byte_identical_across_runs(self, tmp_path) -> None:
        cfg = small_config(estimator='noisy-proportional', noise=NoiseModel(sigma_rot_deg=5.0, seed=3),
                           dataset=DatasetSpec(n_samples=3))
        run_estimation_benchmark(cfg, str(tmp_path / 'a'))
        run_estimation_benchmark(cfg, str(tmp_path / 'b'))
        for name in ('errors.csv', 'traces.csv', 'report.csv', 'summary.txt'):
            assert filecmp.cmp(tmp_path / 'a' / name, tmp_path / 'b' / name, shallow=False)
        report = pd.read_csv(tmp_path / 'a' / 'report.csv')
        assert set(report['config_digest']) == {cfg.digest}

    def test_noise_sweep_accuracy_drops_with_rotation_noise(self) -> None:
        cfg = small_config(dataset=DatasetSpec(n_samples=20, mask_dilate_max=0),
                           refinement=RefinementConfig(max_iters=3, policy='fixed'))
        sweep = run_noise_sweep(cfg, [0.0, 30.0])
        assert list(sweep['sigma_rot_deg']) == [0.0, 30.0]
        assert sweep.loc[0, 'acc_2'] == 1.0
        assert sweep.loc[1, 'acc_2'] < sweep.loc[0, 'acc_2']

    def test_noise_sweep_warns_when_theta_hat_is_exact(self, caplog) -> None:
        with caplog.at_level('WARNING', logger='posematch.modules.eval_harness'):
            run_noise_sweep(small_config(dataset=DatasetSpec(n_samples=1, mask_dilate_max=0)), [0.0])
        assert 'threshold policy' in caplog.text

    def test_default_benchmark_runs_within_its_time_limit(self) -> None:
        # 60 s for 200 scenes, with 2x slack on a tenth of the work
        start = time.perf_counter()
        result = evaluate_estimation(ExperimentConfig(dataset=DatasetSpec(n_samples=20)))
        assert time.perf_counter() - start < 12.0
        assert result.report.accuracy[2] == 1.0

    def test_summary_table_lists_baselines_first(self) -> None:
        report = AccuracyReport(accuracy={2: 0.25, 5: 0.5, 10: 1.0}, n_samples=4)
        table = summary_table(report, 'ours', [{'name': 'prior', 'accuracy': {'2': 0.1, '10': 0.9}}])
        lines = table.splitlines()
        assert '(2°, 2 cm)' in lines[0] and '(10°, 10 cm)' in lines[0]
        assert lines[1].split() == ['prior', '10.0%', '-', '90.0%']
        assert lines[2].split() == ['ours', '25.0%', '50.0%', '100.0%']

    def test_summary_table_falls_back_for_unlabelled_thresholds(self) -> None:
        header = summary_table(AccuracyReport(accuracy={3: 0.5, 5: 1.0}, n_samples=2), 'ours').splitlines()[0]
        assert '(3, 3)' in header and '(5°, 5 cm)' in header


class TestTrackingBenchmark:
    def test_oracle_tracking_run(self, tmp_path) -> None:
        trajectory = {'n_frames': 12, 'max_step_deg': 5.0, 'min_step_deg': 2.5, 'max_step_m': 0.005,
                      'discontinuities': [[6, 30.0]], 'seed': 1}
        summary = run_tracking_benchmark(small_config(trajectory=trajectory), str(tmp_path))
        assert summary.events['restarted'] == 1
        assert summary.events['initialized'] == 1
        assert summary.max_rot_deg < 1e-6
        frames = pd.read_csv(tmp_path / 'tracking.csv')
        assert len(frames) == 12
        assert list(frames.loc[frames['discontinuity'], 'event']) == ['restarted']
        assert (tmp_path / 'tracking_summary.csv').exists()


def test_selftest_passes() -> None:
    results = selftest()
    assert results and all(results.values()), results
