import os

import pytest
from hypothesis import settings

from vecsim.kernel import LatencyModel, seconds
from vecsim.model import FarEdgeNode, GeoPoint, ResourceVector
from vecsim.simulation import build_world

settings.register_profile("default", max_examples=100, deadline=None)
settings.register_profile("ci", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def flat_latency(base_us=1000, queue_us=0.0):
    return LatencyModel.uniform(base_us, 0, queue_us)


def make_world(latency=None, **kw):
    kw.setdefault("full_checks", True)
    return build_world(latency or flat_latency(), **kw)


def park(world, vid, cap=(4, 1024, 200), at=0, loc=(0.0, 0.0)):
    v = FarEdgeNode(vid, GeoPoint(*loc), ResourceVector.of(cap))
    world.lifecycle.vehicle_join(v, at=at)
    return v


def step_until(world, cond):
    while not cond():
        if world.engine.step() is None:
            raise AssertionError("event queue drained before the condition held")


@pytest.fixture
def world():
    return make_world()


@pytest.fixture
def parked_world():
    """World with two registered vehicles and the engine advanced past their joins."""
    w = make_world()
    park(w, "v1")
    park(w, "v2")
    w.engine.run_until(seconds(1))
    return w
