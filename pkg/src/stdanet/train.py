"""
Training: Adam over the tensor engine, gradient accumulation over a batch of windows,
a plain-text metric log and periodic checkpoints.
"""

import logging
import math
import os
import sys
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from stdanet.checkpoint import save_checkpoint
from stdanet.config import MESSAGES, LossConfig, OptimizerConfig, RunConfig
from stdanet.dataset import VideoDataset
from stdanet.exceptions import NonFiniteError, ShapeMismatchError, TrainingDivergedError
from stdanet.losses import downsample_sharp, mse_loss, total_loss, warp_loss
from stdanet.metrics import psnr, ssim_or_nan
from stdanet.network import STDANet, STDANetStack, build_model
from stdanet.synth import FrameWindow
from stdanet.tensor import Tensor

logger = logging.getLogger(__name__)

Model = Union[STDANet, STDANetStack]


class Adam:
    """Adam with bias correction; parameters without a gradient are treated as zero-gradient."""

    def __init__(self, params: list[Tensor], config: OptimizerConfig):
        self.params = params
        self.config = config
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        cfg = self.config
        self.t += 1
        correction1 = 1.0 - cfg.beta1**self.t
        correction2 = 1.0 - cfg.beta2**self.t
        for i, p in enumerate(self.params):
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g
            update = cfg.lr * (self.m[i] / correction1) / (np.sqrt(self.v[i] / correction2) + cfg.eps)
            p.data = (p.data - update).astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class LossBreakdown:
    mse: Tensor
    warp: Tensor
    total: Tensor
    restored: Tensor


def _zero(dtype) -> Tensor:
    return Tensor(np.zeros((), dtype=dtype))


def compute_losses(model: Model, window: FrameWindow, loss_cfg: LossConfig) -> LossBreakdown:
    """
    Losses of one window.

    A single network is supervised on the mid-frame. A stack is supervised on its three
    stage-1 restorations and its final output, plus the warp term of each of its four
    applications. With ``gamma == 0`` the warp term is not evaluated and reads 0.
    """
    if window.sharp is None:
        raise ShapeMismatchError(MESSAGES["shape_mismatch"].format(op="compute_losses", detail="window has no sharp frames"))
    sharp = window.sharp
    dtype = model.config.dtype
    use_warp = loss_cfg.gamma > 0
    out = model(window.blurry)
    if isinstance(model, STDANetStack):
        if window.length != 5:
            raise ShapeMismatchError(
                MESSAGES["shape_mismatch"].format(op="compute_losses", detail=f"stack needs 5 frames, got {window.length}")
            )
        mse = mse_loss(out.restored, sharp[2])
        for k, restored in enumerate(out.intermediates):
            mse = mse + mse_loss(restored, sharp[1 + k])
        warp = _zero(dtype)
        if use_warp:
            down = downsample_sharp(sharp)
            for k, stage in enumerate(out.stages[:3]):
                warp = warp + warp_loss(down[k : k + 3], stage.flows)
            warp = warp + warp_loss(down[1:4], out.stages[3].flows)
    else:
        mse = mse_loss(out.restored, sharp[window.mid])
        warp = warp_loss(downsample_sharp(sharp), out.flows) if use_warp else _zero(dtype)
    return LossBreakdown(mse, warp, total_loss(mse, warp, loss_cfg), out.restored)


@dataclass
class StepMetrics:
    step: int
    mse: float
    warp: float
    total: float
    psnr: float
    ssim: float


LOG_FIELDS = tuple(f.name for f in fields(StepMetrics))


def format_record(metrics: StepMetrics) -> str:
    """``step=1<TAB>mse=...`` with floats at ``repr`` precision."""
    return "\t".join(f"{name}={value!r}" for name, value in zip(LOG_FIELDS, astuple(metrics)))


class MetricLog:
    def __init__(self, path: Union[str, os.PathLike]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")

    def write(self, metrics: StepMetrics) -> None:
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(format_record(metrics) + "\n")


def read_metric_log(path: Union[str, os.PathLike]) -> pd.DataFrame:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = dict(item.split("=", 1) for item in line.split("\t"))
        rows.append({name: (int(record[name]) if name == "step" else float(record[name])) for name in LOG_FIELDS})
    return pd.DataFrame(rows, columns=list(LOG_FIELDS))


def _quality(restored: np.ndarray, sharp: np.ndarray) -> tuple[float, float]:
    restored = np.clip(restored, 0.0, 1.0)
    quality = ssim_or_nan(restored, sharp)
    return psnr(restored, sharp), quality


class Trainer:
    """
    Runs the optimisation loop of a :class:`RunConfig`.

    Each step samples ``batch_size`` windows, accumulates the gradients of ``loss / batch_size``
    over them and applies one Adam update.
    """

    def __init__(self, config: RunConfig, dataset: VideoDataset, model: Optional[Model] = None):
        self.config = config.validate()
        self.dataset = dataset
        self.model = model if model is not None else build_model(config.network, config.stack, config.seed)
        self.optimizer = Adam(self.model.parameters(), config.optimizer)
        self.rng = np.random.default_rng(config.seed)
        self.window_length = 5 if isinstance(self.model, STDANetStack) else 3
        self.run_dir = Path(config.checkpoint_dir)
        self.step_count = 0

    def train_step(self, batch: list[FrameWindow]) -> StepMetrics:
        self.optimizer.zero_grad()
        step = self.step_count + 1
        scale = 1.0 / len(batch)
        totals = np.zeros(5)
        for window in batch:
            try:
                losses = compute_losses(self.model, window, self.config.loss)
                mse, warp = losses.mse.item(), losses.warp.item()
                if not (math.isfinite(mse) and math.isfinite(warp)):
                    raise NonFiniteError(MESSAGES["non_finite"].format(op="loss"))
                (losses.total * scale).backward()
            except NonFiniteError as exc:
                raise TrainingDivergedError(MESSAGES["diverged"].format(step=step, mse="nan", warp="nan")) from exc
            sharp = window.sharp[2 if self.window_length == 5 else window.mid]
            quality = _quality(losses.restored.data, sharp)
            totals += np.array([mse, warp, losses.total.item(), *quality]) * scale
        for p in self.optimizer.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise TrainingDivergedError(
                    MESSAGES["diverged"].format(step=step, mse=totals[0], warp=totals[1])
                )
        self.optimizer.step()
        self.step_count = step
        return StepMetrics(step, *(float(v) for v in totals))

    def checkpoint(self, name: Optional[str] = None) -> Path:
        name = name or f"step_{self.step_count:06d}.npz"
        return save_checkpoint(self.run_dir / name, self.model, self.config, self.step_count)

    def run(self, iterations: Optional[int] = None, progress: Optional[bool] = None) -> list[StepMetrics]:
        """Trains for ``iterations`` steps, logging and checkpointing as configured."""
        cfg = self.config
        iterations = cfg.iterations if iterations is None else iterations
        log = MetricLog(self.run_dir / cfg.log_file)
        history = []
        disable = not sys.stderr.isatty() if progress is None else not progress
        bar = tqdm(range(iterations), desc="train", disable=disable)
        for _ in bar:
            batch = self.dataset.sample(self.rng, cfg.batch_size, self.window_length, cfg.crop, cfg.augment)
            metrics = self.train_step(batch)
            history.append(metrics)
            if metrics.step % cfg.log_every == 0:
                log.write(metrics)
            if metrics.step % cfg.checkpoint_every == 0:
                self.checkpoint()
            bar.set_postfix(total=f"{metrics.total:.5f}", psnr=f"{metrics.psnr:.2f}")
        self.checkpoint("latest.npz")
        logger.info("finished %d steps, last total loss %.6f", iterations, history[-1].total if history else math.nan)
        return history
