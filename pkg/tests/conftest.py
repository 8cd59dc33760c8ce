import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from contact_retarget.geometry import Pose

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

coords = st.floats(-1.0, 1.0, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


@st.composite
def poses(draw):
    p = [draw(coords) for _ in range(3)]
    q = np.array([draw(st.floats(-1, 1)) for _ in range(4)])
    if np.linalg.norm(q) < 1e-3:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    return Pose(p, q)


@st.composite
def planar_poses(draw, z=0.03):
    return Pose.from_xyz_yaw(draw(st.floats(0.2, 0.6)), draw(st.floats(-0.3, 0.3)), z, draw(angles))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_pose(rng, scale=1.0):
    q = rng.normal(size=4)
    return Pose(rng.uniform(-scale, scale, 3), q)
