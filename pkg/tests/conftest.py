import math

import pytest
from hypothesis import settings

from er_repeater.params import TWO_PI, load_preset

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def preset():
    return load_preset()


@pytest.fixture(scope="session")
def er_ion(preset):
    return preset.ion


def hz(x):
    """2pi * x, i.e. a cyclic frequency in Hz as an angular rate."""
    return TWO_PI * x
