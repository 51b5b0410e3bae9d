import numpy as np
import pytest

from printid.encoders import PixelEncoder
from printid.renderer import RenderConfig
from printid.sandbox import sandbox_meshes


@pytest.fixture(scope="session")
def render_cfg_32():
    return RenderConfig(image_size_px=32)


@pytest.fixture(scope="session")
def pixel32():
    return PixelEncoder(32)


@pytest.fixture(scope="session")
def sandbox():
    return sandbox_meshes()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
