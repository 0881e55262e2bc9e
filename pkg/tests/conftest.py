import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from matfree.materials import MaterialField
from matfree.mesh import GridSpec

settings.register_profile("matfree", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("matfree")

FIELD_PARAMS = {"two_layer": {"z_threshold": 0.5}, "smoothed_layer": {"z_center": 0.5, "width": 0.4},
                "functional": {}, "corrosion": {"depth": 0.4}}


def make_field(kind):
    return MaterialField(kind, dict(FIELD_PARAMS[kind]))


@pytest.fixture
def unit_spec():
    return GridSpec((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (3, 3, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
