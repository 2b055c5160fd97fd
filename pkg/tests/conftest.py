import numpy as np
import pytest

from fruitgauge.geometry import RigidTransform, rotation_about


def random_rigid(rng: np.random.Generator, t_scale: float = 1.0) -> RigidTransform:
    """Uniformly random axis-angle rotation plus a random translation."""
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-6:
        axis = rng.normal(size=3)
    angle = rng.uniform(-np.pi, np.pi)
    t = rng.uniform(-t_scale, t_scale, size=3)
    return rotation_about(axis, angle, t)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
