import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

from phaseinterp.pyramid import FilterBank, PyramidConfig


@pytest.fixture(scope="session")
def bank_256():
    return FilterBank(PyramidConfig(), (256, 256))


@pytest.fixture(scope="session")
def natural_image():
    """Fixed 256x256 natural test image in [0, 1]."""
    from skimage import data

    return data.camera()[::2, ::2].astype(np.float64) / 255.0


@pytest.fixture(scope="session")
def toy_bank():
    return FilterBank(PyramidConfig(levels=4), (24, 24))


def smooth_texture(size, rng, rolloff=4.0):
    from phaseinterp.data import _smooth_texture

    return _smooth_texture(size, rng, rolloff)
