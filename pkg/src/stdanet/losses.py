from fractions import Fraction
from typing import Sequence

import numpy as np

from stdanet.config import MESSAGES, LossConfig
from stdanet.exceptions import ShapeMismatchError
from stdanet.sampling import MID, FlowSet, backward_warp, resize_bilinear
from stdanet.tensor import Tensor, as_tensor

Image = Tensor | np.ndarray


def mse_loss(restored: Image, sharp: Image) -> Tensor:
    """Mean over all elements of the squared difference."""
    restored = as_tensor(restored)
    sharp = as_tensor(sharp, dtype=restored.dtype)
    if restored.shape != sharp.shape:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="mse_loss", detail=f"{restored.shape} vs {sharp.shape}")
        )
    return ((restored - sharp) ** 2).mean()


def downsample_sharp(frames: Sequence[Image], factor: Fraction = Fraction(1, 4)) -> list[Tensor]:
    """Sharp frames brought to flow resolution for the warp loss."""
    return [resize_bilinear(as_tensor(frame), factor) for frame in frames]


def warp_loss(sharp_down: Sequence[Image], flows: FlowSet) -> Tensor:
    """
    Photometric consistency of the four adjacent-pair flows.

    Each pair ``(src, dst)`` contributes ``mse(S_src, warp(S_dst, O_{src->dst}))``; the four terms
    are averaged. The sharp frames are constants, so gradients only reach the flows.

    :param sharp_down: Sharp frames ``i-1, i, i+1`` at flow resolution.
    :param flows: The window's flow set.
    :raises FlowSetError: If a flow is missing.
    """
    if len(sharp_down) != 3:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="warp_loss", detail=f"expected 3 frames, got {len(sharp_down)}")
        )
    frames = [as_tensor(frame).detach() for frame in sharp_down]
    flows.validate(*frames[MID].shape[1:])
    terms = [mse_loss(frames[src], backward_warp(frames[dst], flow)) for (src, dst), flow in flows.pairs().items()]
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total / len(terms)


def total_loss(mse: Tensor, warp: Tensor, cfg: LossConfig) -> Tensor:
    return as_tensor(mse) + as_tensor(warp) * cfg.gamma
