import os

import hypothesis
import numpy as np
import pytest

from boundary_trace.domain_file import load_fixture
from boundary_trace.whitney import anchors, whitney_decompose

np.seterr(all="warn")

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None, derandomize=True)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def unit_square():
    return load_fixture("unit_square")


@pytest.fixture(scope="session")
def slit_square():
    return load_fixture("slit_square")


@pytest.fixture(scope="session")
def hub():
    return load_fixture("hub")


@pytest.fixture(scope="session")
def comb():
    return load_fixture("comb")


@pytest.fixture(scope="session")
def unit_dec(unit_square):
    return whitney_decompose(unit_square, 4)


@pytest.fixture(scope="session")
def unit_anchors(unit_dec, unit_square):
    return anchors(unit_dec, unit_square)


@pytest.fixture(scope="session")
def slit_dec(slit_square):
    return whitney_decompose(slit_square, 4)


@pytest.fixture(scope="session")
def slit_anchors(slit_dec, slit_square):
    return anchors(slit_dec, slit_square)
