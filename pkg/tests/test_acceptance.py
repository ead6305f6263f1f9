"""Desk-scale training runs; deselected by default, run with ``pytest -m slow``."""

import pytest

from stdanet.config import RunConfig
from stdanet.dataset import VideoDataset, parse_synth_plan, write_dataset
from stdanet.evaluate import evaluate
from stdanet.network import STDANetStack
from stdanet.train import Trainer

pytestmark = pytest.mark.slow

ITERATIONS = 2000


@pytest.fixture(scope="module")
def overfit_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("overfit")
    spec = {
        "seed": 21,
        "window": 7,
        "sequences": [{"name": "overfit", "split": "train", "random": {"height": 64, "width": 64, "frames": 8}}],
    }
    write_dataset(parse_synth_plan(spec), root)
    return root


def overfit(root, run_dir, **changes):
    """Trains the desk config on the single sequence and scores it on its own frames."""
    config = RunConfig(dataset_root=str(root), checkpoint_dir=str(run_dir), iterations=ITERATIONS, **changes)
    dataset = VideoDataset(root, "train")
    trainer = Trainer(config, dataset)
    trainer.run(progress=False)
    row = evaluate(trainer.model, dataset, progress=False).iloc[0]
    return trainer.model, row


@pytest.fixture(scope="module")
def desk_run(overfit_root, tmp_path_factory):
    return overfit(overfit_root, tmp_path_factory.mktemp("desk"))


def test_desk_config_beats_the_blurry_input_by_three_db(desk_run):
    _, row = desk_run

    assert row["psnr"] >= row["baseline_psnr"] + 3.0


def test_single_point_sampling_is_worse(desk_run, overfit_root, tmp_path):
    _, full = desk_run

    _, single_point = overfit(overfit_root, tmp_path, points=1)

    assert single_point["psnr"] < full["psnr"]


def test_removing_the_flow_estimator_is_worse(desk_run, overfit_root, tmp_path):
    _, full = desk_run

    _, no_flow = overfit(overfit_root, tmp_path, use_flow=False)

    assert no_flow["psnr"] < full["psnr"]


def test_stack_is_at_least_as_good_as_a_single_pass(desk_run, overfit_root, tmp_path):
    _, single = desk_run

    model, stacked = overfit(overfit_root, tmp_path, stack=True)

    assert isinstance(model, STDANetStack)
    assert stacked["psnr"] >= single["psnr"]
