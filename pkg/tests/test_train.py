import math
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from stdanet.config import LossConfig, OptimizerConfig, RunConfig
from stdanet.dataset import VideoDataset
from stdanet.exceptions import NonFiniteError, ShapeMismatchError, TrainingDivergedError
from stdanet.network import STDANet, STDANetStack
from stdanet.synth import make_window
from stdanet.tensor import Tensor
from stdanet.train import (
    LOG_FIELDS,
    Adam,
    MetricLog,
    StepMetrics,
    Trainer,
    compute_losses,
    format_record,
    read_metric_log,
)


def window(rng, length=3, size=16):
    blurry = rng.uniform(size=(length, 3, size, size))
    return make_window(blurry, np.clip(blurry + rng.normal(0, 0.05, size=blurry.shape), 0, 1))


def test_adam_first_step_moves_by_the_learning_rate():
    p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    p.grad = np.array([0.5, -3.0, 0.0])
    optimizer = Adam([p], OptimizerConfig(lr=1e-3))

    optimizer.step()

    np.testing.assert_allclose(p.data, [1.0 - 1e-3, -2.0 + 1e-3, 0.5], atol=1e-9)
    optimizer.zero_grad()
    assert p.grad is None


def test_zero_gamma_skips_the_warp_term(rng, micro_config):
    model = STDANet(micro_config, rng)

    with patch("stdanet.train.warp_loss") as warp_loss:
        losses = compute_losses(model, window(rng), LossConfig(gamma=0.0))

    warp_loss.assert_not_called()
    assert losses.warp.item() == 0.0
    assert losses.total.item() == losses.mse.item()


def test_warp_term_is_weighted(rng, micro_config):
    losses = compute_losses(STDANet(micro_config, rng), window(rng), LossConfig(gamma=0.5))

    assert losses.total.item() == pytest.approx(losses.mse.item() + 0.5 * losses.warp.item())


def test_stack_losses_sum_four_restorations(rng, micro_config):
    stack = STDANetStack(micro_config, rng)

    losses = compute_losses(stack, window(rng, length=5), LossConfig(gamma=0.05))

    assert losses.restored.shape == (3, 16, 16)
    assert losses.mse.item() > 0
    with pytest.raises(ShapeMismatchError):
        compute_losses(stack, window(rng, length=3), LossConfig())


def test_one_step_decreases_the_loss(rng):
    config = RunConfig(channels=8, heads=2, points=2, residual_blocks=1, dtype="float64", lr=1e-6, batch_size=1)
    trainer = Trainer(config, MagicMock())
    sample = window(rng)

    before = compute_losses(trainer.model, sample, config.loss).total.item()
    metrics = trainer.train_step([sample])
    after = compute_losses(trainer.model, sample, config.loss).total.item()

    assert metrics.step == 1
    assert metrics.total == pytest.approx(before)
    assert after < before


def test_non_finite_losses_stop_training(rng, run_config):
    trainer = Trainer(run_config, MagicMock())

    with patch("stdanet.train.compute_losses", side_effect=NonFiniteError("loss: produced non-finite values")):
        with pytest.raises(TrainingDivergedError, match="step 1"):
            trainer.train_step([window(rng)])
    assert trainer.step_count == 0


def test_metric_log_round_trip(tmp_path):
    log = MetricLog(tmp_path / "metrics.log")
    records = [StepMetrics(1, 0.25, 0.5, 0.275, 6.02, math.nan), StepMetrics(2, 0.125, 0.25, 0.1375, 9.03, 0.5)]
    for record in records:
        log.write(record)

    table = read_metric_log(tmp_path / "metrics.log")

    assert list(table.columns) == list(LOG_FIELDS)
    assert table["step"].tolist() == [1, 2]
    assert table["total"].tolist() == [0.275, 0.1375]
    assert math.isnan(table["ssim"][0])
    assert format_record(records[0]).startswith("step=1\tmse=0.25\t")


def test_run_writes_log_and_checkpoints(run_config):
    dataset = VideoDataset(run_config.dataset_root, "train")

    history = Trainer(run_config, dataset).run(progress=False)

    run_dir = run_config.checkpoint_dir
    names = sorted(p.name for p in Path(run_dir).iterdir())
    assert [m.step for m in history] == [1, 2, 3]
    assert names == ["latest.npz", "metrics.log", "step_000002.npz"]
    assert len(read_metric_log(f"{run_dir}/metrics.log")) == 3


def test_same_seed_gives_identical_logs(run_config, tmp_path):
    dataset = VideoDataset(run_config.dataset_root, "train")
    logs = []
    for name in ("a", "b"):
        config = run_config.replace(checkpoint_dir=str(tmp_path / name), iterations=10, checkpoint_every=100)
        Trainer(config, dataset).run(progress=False)
        logs.append((tmp_path / name / "metrics.log").read_bytes())

    assert logs[0] == logs[1]
    assert logs[0].count(b"\n") == 10


def test_stack_training_samples_five_frame_windows(run_config):
    dataset = VideoDataset(run_config.dataset_root, "train")
    trainer = Trainer(run_config.replace(stack=True), dataset)

    history = trainer.run(iterations=1, progress=False)

    assert trainer.window_length == 5
    assert history[0].step == 1
