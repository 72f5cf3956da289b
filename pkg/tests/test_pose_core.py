import numpy as np
import pytest
from hypothesis import given, strategies as st

from posematch.core.exceptions import ConfigurationError, NonPositiveDepth, ValidationError, ZeroNormQuaternion
from posematch.core.model import Pose, RawQuaternion, UnitQuaternion, UntangledDelta
from posematch.modules.pose_core import (
    StandardizationStats,
    destandardize,
    entangle,
    quat_angle_deg,
    quat_compose,
    quat_normalize,
    relative_pose_vector,
    relative_rotation,
    slerp,
    standardize,
    untangle,
)
from posematch.modules.synth import sample_pose_in_frustum, sample_uniform_rotation
from strategies import finite, identity_pose, poses, unit_quaternions


class TestQuaternions:
    @given(q=unit_quaternions())
    def test_angle_to_itself_and_to_its_negation_is_zero(self, *, q: UnitQuaternion) -> None:
        assert quat_angle_deg(q, q) < 1e-6
        assert quat_angle_deg(q, q.negated()) < 1e-6

    @given(a=unit_quaternions(), b=unit_quaternions())
    def test_angle_is_symmetric_and_bounded(self, *, a: UnitQuaternion, b: UnitQuaternion) -> None:
        angle = quat_angle_deg(a, b)
        assert 0.0 <= angle <= 180.0 + 1e-9
        assert angle == pytest.approx(quat_angle_deg(b, a), abs=1e-9)

    @given(a=unit_quaternions(), b=unit_quaternions())
    def test_relative_rotation_maps_source_onto_target(self, *, a: UnitQuaternion, b: UnitQuaternion) -> None:
        delta = relative_rotation(a, b)
        assert quat_angle_deg(quat_compose(delta, a), b) < 1e-6

    @given(angle=st.floats(0.0, 180.0, **finite))
    def test_axis_angle_has_that_angle(self, *, angle: float) -> None:
        q = UnitQuaternion.from_axis_angle((0.3, -1.0, 0.2), angle)
        assert quat_angle_deg(UnitQuaternion.identity(), q) == pytest.approx(angle, abs=1e-6)

    def test_quarter_turn_about_z_maps_x_to_y(self) -> None:
        q = UnitQuaternion.from_axis_angle((0, 0, 1), 90.0)
        assert np.allclose(q.rotate([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)

    def test_compose_applies_right_operand_first(self) -> None:
        about_z = UnitQuaternion.from_axis_angle((0, 0, 1), 90.0)
        about_x = UnitQuaternion.from_axis_angle((1, 0, 0), 90.0)
        composed = quat_compose(about_x, about_z)
        expected = about_x.rotate(about_z.rotate([1.0, 0.0, 0.0]))
        assert np.allclose(composed.rotate([1.0, 0.0, 0.0]), expected, atol=1e-12)

    @given(q=unit_quaternions())
    def test_matrix_and_conjugate_agree_with_rotate(self, *, q: UnitQuaternion) -> None:
        v = np.array([0.3, -1.2, 2.0])
        assert q.as_matrix() @ v == pytest.approx(q.rotate(v).ravel(), abs=1e-12)
        assert quat_angle_deg(quat_compose(q.conjugate(), q), UnitQuaternion.identity()) < 1e-6

    def test_angle_obeys_the_triangle_inequality(self) -> None:
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a, b, c = (sample_uniform_rotation(rng) for _ in range(3))
            assert quat_angle_deg(a, c) <= quat_angle_deg(a, b) + quat_angle_deg(b, c) + 1e-6

    def test_long_composition_chain_stays_unit(self) -> None:
        rng = np.random.default_rng(12)
        q = UnitQuaternion.identity()
        for _ in range(10000):
            q = quat_compose(sample_uniform_rotation(rng), q)
        assert abs(np.linalg.norm(q.as_array()) - 1.0) < 1e-12

    def test_normalize_keeps_direction(self) -> None:
        q = quat_normalize(RawQuaternion(2.0, 0.0, 0.0, 0.0))
        assert q == UnitQuaternion.identity()
        assert quat_normalize([0.0, 0.0, 3.0, 4.0]).as_array() == pytest.approx([0.0, 0.0, 0.6, 0.8])

    def test_normalize_rejects_zero(self) -> None:
        with pytest.raises(ZeroNormQuaternion):
            quat_normalize([0.0, 0.0, 0.0, 1e-14])

    def test_unit_quaternion_rejects_non_unit_norm(self) -> None:
        with pytest.raises(ValidationError):
            UnitQuaternion(1.0, 0.1, 0.0, 0.0)


class TestSlerp:
    @given(a=unit_quaternions(), b=unit_quaternions())
    def test_endpoints(self, *, a: UnitQuaternion, b: UnitQuaternion) -> None:
        assert quat_angle_deg(slerp(a, b, 0.0), a) < 1e-6
        assert quat_angle_deg(slerp(a, b, 1.0), b) < 1e-6

    @given(a=unit_quaternions(), b=unit_quaternions(), s=st.floats(0.0, 1.0, **finite))
    def test_moves_at_constant_speed_along_the_short_arc(self, *, a: UnitQuaternion, b: UnitQuaternion,
                                                          s: float) -> None:
        total = quat_angle_deg(a, b)
        assert quat_angle_deg(a, slerp(a, b, s)) == pytest.approx(s * total, abs=1e-5)

    def test_rejects_parameter_outside_unit_interval(self) -> None:
        with pytest.raises(ValidationError):
            slerp(UnitQuaternion.identity(), UnitQuaternion.identity(), 1.5)


class TestUntangledTranslation:
    def test_depth_term_is_log_ratio(self, cam) -> None:
        delta = untangle(identity_pose(0.5), identity_pose(1.0), cam)
        assert delta.vx == 0.0 and delta.vy == 0.0
        assert delta.vz == pytest.approx(np.log(0.5))

    def test_lateral_term_is_pixel_offset(self, cam) -> None:
        tgt = Pose(rotation=UnitQuaternion.identity(), translation=(0.05, -0.02, 0.5))
        delta = untangle(identity_pose(0.5), tgt, cam)
        assert delta.vx == pytest.approx(cam.fx * 0.1)
        assert delta.vy == pytest.approx(cam.fy * -0.04)
        assert delta.vz == pytest.approx(0.0)

    @given(pose=poses())
    def test_same_pose_gives_zero_delta(self, cam, *, pose: Pose) -> None:
        assert np.allclose(untangle(pose, pose, cam).as_array(), 0.0, atol=1e-9)

    def test_entangle_inverts_untangle(self, cam) -> None:
        rng = np.random.default_rng(7)
        for _ in range(1000):
            src = sample_pose_in_frustum(cam, (0.3, 2.0), None, rng)
            tgt = sample_pose_in_frustum(cam, (0.3, 2.0), None, rng)
            back = entangle(src, relative_rotation(src.rotation, tgt.rotation), untangle(src, tgt, cam), cam)
            assert quat_angle_deg(back.rotation, tgt.rotation) < 1e-9
            assert np.max(np.abs(back.translation_array() - tgt.translation_array())) < 1e-12

    def test_zero_delta_leaves_pose_unchanged(self, cam) -> None:
        pose = Pose(rotation=UnitQuaternion.from_axis_angle((1, 1, 0), 30.0), translation=(0.1, -0.05, 0.8))
        moved = entangle(pose, UnitQuaternion.identity(), UntangledDelta.zero(), cam)
        assert quat_angle_deg(moved.rotation, pose.rotation) < 1e-9
        assert moved.translation_array() == pytest.approx(pose.translation_array())

    @pytest.mark.parametrize('z', [0.0, -0.5])
    def test_non_positive_depth_is_rejected(self, cam, z: float) -> None:
        behind = Pose(rotation=UnitQuaternion.identity(), translation=(0.0, 0.0, z))
        with pytest.raises(NonPositiveDepth):
            untangle(behind, identity_pose(), cam)
        with pytest.raises(NonPositiveDepth):
            untangle(identity_pose(), behind, cam)
        with pytest.raises(NonPositiveDepth):
            entangle(behind, UnitQuaternion.identity(), UntangledDelta.zero(), cam)

    def test_relative_pose_vector_layout(self, cam) -> None:
        tgt = Pose(rotation=UnitQuaternion.from_axis_angle((0, 1, 0), 20.0), translation=(0.0, 0.0, 0.4))
        vec = relative_pose_vector(identity_pose(0.5), tgt, cam)
        assert vec.shape == (7,)
        assert vec[:4] == pytest.approx(tgt.rotation.as_array())
        assert vec[6] == pytest.approx(np.log(0.5 / 0.4))


class TestStandardization:
    def test_fit_gives_zero_mean_unit_variance(self) -> None:
        rng = np.random.default_rng(0)
        pool = rng.normal(3.0, 2.0, (500, 7))
        stats = StandardizationStats.fit(pool)
        standardized = standardize(pool, stats)
        assert np.allclose(standardized.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(standardized.std(axis=0), 1.0, atol=1e-12)

    @given(values=st.lists(st.floats(-100.0, 100.0, **finite), min_size=7, max_size=7))
    def test_destandardize_inverts_standardize(self, *, values) -> None:
        stats = StandardizationStats(mean=(1, 2, 3, 4, 5, 6, 7), std=(0.5, 1, 2, 3, 4, 5, 6))
        assert destandardize(standardize(values, stats), stats) == pytest.approx(values, abs=1e-9)

    def test_identity_stats_change_nothing(self) -> None:
        values = np.arange(7.0)
        assert standardize(values, StandardizationStats.identity()) == pytest.approx(values)

    def test_rejects_non_positive_std(self) -> None:
        with pytest.raises(ValidationError):
            StandardizationStats(mean=(0.0,) * 7, std=(1.0,) * 6 + (0.0,))

    def test_rejects_wrong_size(self) -> None:
        with pytest.raises(ValidationError):
            StandardizationStats.fit(np.zeros((10, 6)))

    def test_save_and_load(self, tmp_path) -> None:
        stats = StandardizationStats(mean=(0.1,) * 7, std=(2.0,) * 7)
        path = str(tmp_path / 'stats.json')
        stats.save(path)
        assert StandardizationStats.load(path) == stats

    def test_load_reports_malformed_file(self, tmp_path) -> None:
        path = tmp_path / 'stats.json'
        path.write_text('{"mean": [0, 0]}')
        with pytest.raises(ConfigurationError):
            StandardizationStats.load(str(path))
