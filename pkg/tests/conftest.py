import numpy as np
import pytest

from lptrack.trajgen import DiffusionParams


@pytest.fixture
def open_params():
    """Unbounded-domain diffusion parameters for pure statistics tests."""
    def make(**overrides):
        base = dict(
            diffusion_coefficient=1.0,
            frame_interval=1.0,
            n_frames=1000,
            fov=(1e12, 1e12),
            boundary="open",
            start=(5e11, 5e11),
        )
        base.update(overrides)
        return DiffusionParams(**base)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
