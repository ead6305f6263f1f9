import logging
import sys
from typing import Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from stdanet.config import MESSAGES
from stdanet.dataset import VideoDataset, VideoSequence, baseline
from stdanet.exceptions import DatasetError
from stdanet.metrics import psnr, ssim_or_nan
from stdanet.network import STDANet, STDANetStack

logger = logging.getLogger(__name__)

Model = Union[STDANet, STDANetStack]
COLUMNS = ["sequence", "frames", "psnr", "ssim", "baseline_psnr", "baseline_ssim", "delta_psnr"]
AGGREGATE = "mean"


def score_frames(restored: np.ndarray, sharp: np.ndarray) -> tuple[float, float]:
    """Mean PSNR/SSIM over paired ``[N, 3, H, W]`` frame stacks; SSIM is NaN below 11x11."""
    scores = [(psnr(r, s), ssim_or_nan(r, s)) for r, s in zip(restored, sharp)]
    return float(np.mean([p for p, _ in scores])), float(np.mean([q for _, q in scores]))


def restore_sequence_frames(model: Model, sequence: VideoSequence) -> np.ndarray:
    length = 5 if isinstance(model, STDANetStack) else 3
    return np.stack([model.restore(sequence.window(i, length).blurry) for i in range(len(sequence))])


def evaluate(model: Optional[Model], dataset: VideoDataset, progress: Optional[bool] = None) -> pd.DataFrame:
    """
    Per-sequence PSNR/SSIM of the restorations plus the blurry-input baseline.

    ``model=None`` scores the blurry inputs themselves. The last row, ``mean``, averages the
    per-sequence rows.
    """
    rows = []
    disable = not sys.stderr.isatty() if progress is None else not progress
    for sequence in tqdm(dataset, desc="eval", disable=disable):
        if sequence.sharp is None:
            raise DatasetError(MESSAGES["bad_sequence"].format(name=sequence.name, detail="no sharp frames"))
        restored = sequence.blurry if model is None else restore_sequence_frames(model, sequence)
        score_psnr, score_ssim = score_frames(restored, sequence.sharp)
        base_psnr, base_ssim = baseline(sequence.blurry, sequence.sharp)
        rows.append(
            {
                "sequence": sequence.name,
                "frames": len(sequence),
                "psnr": score_psnr,
                "ssim": score_ssim,
                "baseline_psnr": base_psnr,
                "baseline_ssim": base_ssim,
                "delta_psnr": score_psnr - base_psnr,
            }
        )
        logger.info("%s: %.2f dB (baseline %.2f dB)", sequence.name, score_psnr, base_psnr)
    table = pd.DataFrame(rows, columns=COLUMNS)
    means = table.drop(columns=["sequence"]).mean(numeric_only=True)
    aggregate = pd.DataFrame([{"sequence": AGGREGATE, **means.to_dict()}], columns=COLUMNS)
    aggregate["frames"] = int(table["frames"].sum())
    return pd.concat([table, aggregate], ignore_index=True)
