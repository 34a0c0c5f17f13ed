import numpy as np
import pytest

from ansfield.harness.config import HarnessConfig
from ansfield.harness.dataset import generate_dataset, load_dataset
from ansfield.scene import Scene, SceneObject, build_navgrid


@pytest.fixture
def open_scene():
    """6x4 room, two well-separated objects, no partitions."""
    return Scene(
        id="open",
        width=6.0,
        height=4.0,
        walls=(),
        objects=(
            SceneObject(
                id="obj_00",
                category="couch",
                color="red",
                footprint=(1.0, 1.0, 2.0, 1.8),
                side_visible=True,
            ),
            SceneObject(
                id="obj_01",
                category="lamp",
                color="blue",
                footprint=(4.5, 2.5, 5.0, 3.0),
                side_visible=False,
            ),
        ),
    )


@pytest.fixture
def walled_scene():
    """4x4 room split by a partition jutting from the south wall."""
    return Scene(
        id="walled",
        width=4.0,
        height=4.0,
        walls=((2.0, 0.0, 2.0, 2.5),),
        objects=(
            SceneObject(
                id="obj_00",
                category="desk",
                color="black",
                footprint=(0.5, 0.5, 1.3, 1.1),
                side_visible=True,
            ),
            SceneObject(
                id="obj_01",
                category="plant",
                color="green",
                footprint=(3.0, 0.5, 3.5, 1.0),
                side_visible=False,
            ),
        ),
    )


@pytest.fixture
def open_grid(open_scene):
    return build_navgrid(open_scene, cell_size=0.25, wall_buffer=0.1)


TINY = HarnessConfig(
    seed=7,
    n_train_scenes=3,
    n_eval_scenes=2,
    questions_per_scene=3,
    n_samples=64,
    train_steps=5,
    sample_steps=8,
    sample_avg=2,
)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_ds")
    generate_dataset(root, TINY)
    return load_dataset(root, verify=True)


def rng_of(*entropy) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
