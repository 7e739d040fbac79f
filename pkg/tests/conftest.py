import numpy as np
import pytest

from contactlab.settings import Settings, set_settings


@pytest.fixture(autouse=True)
def default_settings(tmp_path):
    set_settings(Settings(threads=2, output_dir=str(tmp_path / "results")))
    yield
    set_settings(None)


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)
