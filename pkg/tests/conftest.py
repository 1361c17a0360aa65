import numpy as np
import pytest

from fintact.simulator import FingerState, Renderer, SceneConfig


@pytest.fixture(scope="session")
def scene():
    return SceneConfig()


@pytest.fixture(scope="session")
def renderer(scene):
    return Renderer(scene)


@pytest.fixture(scope="session")
def rest_state():
    return FingerState()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
