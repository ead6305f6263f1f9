import numpy as np
import pytest

from stdanet.config import NetworkConfig, RunConfig
from stdanet.dataset import parse_synth_plan, write_dataset

SMALL_SCENE = {"height": 16, "width": 16, "frames": 4, "factor": 8}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_config():
    return NetworkConfig(channels=8, heads=2, points=2, residual_blocks=1, dtype="float64")


@pytest.fixture
def tiny_config():
    return NetworkConfig(channels=8, heads=2, points=2, residual_blocks=1)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """A two-sequence synthetic dataset (one train, one test) of 16x16 frames."""
    root = tmp_path_factory.mktemp("synth")
    spec = {
        "seed": 11,
        "window": 7,
        "sequences": [
            {"name": "train_00", "split": "train", "random": SMALL_SCENE},
            {"name": "test_00", "split": "test", "random": SMALL_SCENE},
        ],
    }
    write_dataset(parse_synth_plan(spec), root)
    return root


@pytest.fixture
def run_config(tmp_path, synth_root):
    return RunConfig(
        channels=8,
        heads=2,
        points=2,
        residual_blocks=1,
        batch_size=1,
        crop=8,
        iterations=3,
        checkpoint_every=2,
        dataset_root=str(synth_root),
        checkpoint_dir=str(tmp_path / "run"),
    )
