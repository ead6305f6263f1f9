"""Sliding-window restoration of a frame directory, with optional attention heatmap export."""

import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from tqdm import tqdm

from stdanet import imageio
from stdanet.config import CONFIG, MESSAGES
from stdanet.exceptions import DatasetError, NormalizationError, ShapeMismatchError
from stdanet.network import STDANet, STDANetStack
from stdanet.stda import export_attention_maps
from stdanet.tensor import no_grad

logger = logging.getLogger(__name__)

Model = Union[STDANet, STDANetStack]
PathLike = Union[str, os.PathLike]


@dataclass
class InferenceResult:
    restored: np.ndarray
    heatmaps: Optional[np.ndarray] = None


def window_indices(center: int, count: int, length: int) -> np.ndarray:
    """Indices of the window around ``center``, clamped to ``[0, count - 1]``."""
    half = length // 2
    return np.clip(np.arange(center - half, center + half + 1), 0, count - 1)


def _heatmaps(model: Model, frames: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]:
    out = model(frames)
    last = out.stages[-1] if isinstance(model, STDANetStack) else out
    restored = np.clip(out.restored.data, 0.0, 1.0)
    if last.stda.msa is None:
        return restored, None
    _, height, width = last.stda.fused.shape
    return restored, export_attention_maps(last.stda.msa.weights, height, width)


def restore_frames(model: Model, frames: np.ndarray, dump_attention: bool = False, progress: Optional[bool] = None) -> InferenceResult:
    """
    Restores every frame of ``[N, 3, H, W]`` from its clamped window.

    :raises DatasetError: With fewer than 3 frames (5 for a stack).
    """
    length = 5 if isinstance(model, STDANetStack) else 3
    if len(frames) < length:
        raise DatasetError(MESSAGES["too_few_frames"].format(need=length, found=len(frames), path="input"))
    if dump_attention and not model.config.use_msa:
        logger.warning("MSA layer disabled, no attention heatmaps to export")
        dump_attention = False
    restored, maps = [], []
    disable = not sys.stderr.isatty() if progress is None else not progress
    with no_grad():
        for i in tqdm(range(len(frames)), desc="infer", disable=disable):
            window = frames[window_indices(i, len(frames), length)]
            if dump_attention:
                image, heat = _heatmaps(model, window)
                maps.append(heat)
            else:
                image = np.clip(model(window).restored.data, 0.0, 1.0)
            restored.append(image)
    return InferenceResult(np.stack(restored), np.stack(maps) if maps else None)


def check_heatmaps(heatmaps: np.ndarray) -> float:
    """Maximum deviation of the per-pixel frame sums from 1; raises past the dtype tolerance."""
    tolerance = CONFIG["normalization_tolerance"].get(str(heatmaps.dtype), 1e-6)
    deviation = float(np.abs(heatmaps.sum(axis=-3, dtype=np.float64) - 1.0).max())
    if deviation > tolerance:
        raise NormalizationError(MESSAGES["normalization"].format(dev=deviation))
    return deviation


def write_outputs(out_dir: PathLike, result: InferenceResult) -> list[Path]:
    """``<out>/%05d.png`` per frame and ``<out>/attention/%05d_t{0,1,2}.png`` per heatmap."""
    out_dir = Path(out_dir)
    written = [imageio.save_image(out_dir / imageio.frame_name(i), frame) for i, frame in enumerate(result.restored)]
    if result.heatmaps is not None:
        if result.heatmaps.ndim != 4:
            raise ShapeMismatchError(
                MESSAGES["shape_mismatch"].format(op="write_outputs", detail=f"heatmaps {result.heatmaps.shape}")
            )
        check_heatmaps(result.heatmaps)
        heat_dir = out_dir / CONFIG["heatmap_dir_name"]
        for i, maps in enumerate(result.heatmaps):
            for t, heat in enumerate(maps):
                written.append(imageio.save_grayscale(heat_dir / f"{i:05d}_t{t}.png", heat))
    logger.info("wrote %d files to %s", len(written), out_dir)
    return written


def infer_directory(
    model: Model, frames_dir: PathLike, out_dir: PathLike, dump_attention: bool = False, progress: Optional[bool] = None
) -> InferenceResult:
    frames = imageio.load_frames(frames_dir)
    length = 5 if isinstance(model, STDANetStack) else 3
    if len(frames) < length:
        raise DatasetError(MESSAGES["too_few_frames"].format(need=length, found=len(frames), path=frames_dir))
    result = restore_frames(model, frames, dump_attention, progress)
    write_outputs(out_dir, result)
    return result
