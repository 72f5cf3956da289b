import pytest

from posematch.config import CAMERA
from posematch.core.model import CameraIntrinsics
from posematch.modules.renderer import make_cube, make_icosphere, make_plate


@pytest.fixture(scope='session')
def cam() -> CameraIntrinsics:
    return CameraIntrinsics.from_dict(CAMERA)


@pytest.fixture(scope='session')
def cube():
    return make_cube(0.1)


@pytest.fixture(scope='session')
def plate():
    return make_plate(0.1)


@pytest.fixture(scope='session')
def icosphere():
    return make_icosphere(0.05, subdivisions=1)
