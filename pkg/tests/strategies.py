"""Hypothesis strategies and small builders shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from posematch.core.model import Pose, UnitQuaternion
from posematch.modules.pose_core import quat_compose, quat_normalize

finite = dict(allow_nan=False, allow_infinity=False)


def unit_quaternions():
    """Unit quaternions from 4-D draws, rejecting near-zero ones."""
    components = st.floats(-1.0, 1.0, **finite)
    return (st.tuples(components, components, components, components)
            .filter(lambda v: np.linalg.norm(v) > 0.1)
            .map(quat_normalize))


def poses(z_min: float = 0.3, z_max: float = 2.0):
    """Poses in front of the camera with the center roughly inside the image."""
    lateral = st.floats(-0.3, 0.3, **finite)
    depth = st.floats(z_min, z_max, **finite)
    return st.builds(lambda q, x, y, z: Pose(rotation=q, translation=(x * z, y * z, z)),
                     unit_quaternions(), lateral, lateral, depth)


def identity_pose(z: float = 0.5) -> Pose:
    return Pose(rotation=UnitQuaternion.identity(), translation=(0.0, 0.0, z))


def rotated_pose(pose: Pose, axis, angle_deg: float) -> Pose:
    """pose with an extra camera-frame rotation applied, same translation."""
    return Pose(rotation=quat_compose(UnitQuaternion.from_axis_angle(axis, angle_deg), pose.rotation),
                translation=pose.translation)
