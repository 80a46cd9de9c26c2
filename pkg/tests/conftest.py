import numpy as np
import pytest

from mimo_poison import kernels
from mimo_poison.channel import Building, ScenarioConfig, UserGrid

BACKENDS = ["python"] + (["cython"] if kernels._ckernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    previous = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


def five_building_scene(max_reflections=2, nx=50, ny=50):
    return ScenarioConfig(
        bs_position=(0.0, 0.0, 15.0),
        user_grid=UserGrid(origin=(-60.0, -60.0), nx=nx, ny=ny, spacing=2.4),
        buildings=(
            Building(10, 25, 10, 30, 20),
            Building(-40, -20, -10, 5, 30),
            Building(-15, 0, 25, 40, 12),
            Building(30, 45, -45, -30, 25),
            Building(-50, -35, 35, 50, 18),
        ),
        max_reflections=max_reflections,
        seed=3,
    )


@pytest.fixture(scope="session")
def small_scene():
    return five_building_scene()


@pytest.fixture(scope="session")
def small_dataset(small_scene):
    from mimo_poison.channel import generate_scenario
    return generate_scenario(small_scene)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
