import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from do3d.camera import Intrinsics
from do3d.scene import presets, render_pair

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def K():
    return Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=40.0)


_cache = {}


def rendered(name, **kw):
    key = (name, tuple(sorted(kw.items())))
    if key not in _cache:
        _cache[key] = render_pair(getattr(presets, name)(**kw))
    return _cache[key]


@pytest.fixture(scope="session")
def moving_box():
    return rendered("moving_box")


@pytest.fixture(scope="session")
def static_plane():
    return rendered("static_plane")


@pytest.fixture(scope="session")
def deforming():
    return rendered("deforming_object")
