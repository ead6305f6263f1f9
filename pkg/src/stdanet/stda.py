"""
Spatio-temporal deformable attention: the multi-to-multi (MMA) and multi-to-single (MSA) layers.

Both layers condition their offset and attention heads on the same tensor: the three input
maps with the two side maps warped onto the mid-frame, concatenated along channels (``5C``),
plus the query frame's own map (``C``). MMA answers ``T * H * W`` queries (every pixel of every
frame), MSA only the ``H * W`` mid-frame pixels.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from stdanet import ops
from stdanet.config import MESSAGES, NetworkConfig
from stdanet.deform_attn import BaseOffsetMap, check_normalized, deformable_attention, phi, reference_points
from stdanet.exceptions import ShapeMismatchError
from stdanet.layers import Conv2d, Linear, Module
from stdanet.sampling import MID, NEXT, PREV, FlowSet, backward_warp
from stdanet.tensor import Tensor, concat, stack

logger = logging.getLogger(__name__)


@dataclass
class AttentionResult:
    """Output features of an attention layer plus the intermediates it attended with."""

    features: list[Tensor]
    weights: Tensor
    offsets: Tensor
    values: Tensor
    fused: Tensor


def _check_window(features: Sequence[Tensor], flows: FlowSet, op: str) -> tuple[int, int, int]:
    if len(features) != 3 or len({f.shape for f in features}) != 1 or features[0].ndim != 3:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op=op, detail=f"expected three equal [C,H,W] maps, got {[f.shape for f in features]}")
        )
    channels, height, width = features[0].shape
    flows.validate(height, width)
    return channels, height, width


def conditioning(features: Sequence[Tensor], flows: FlowSet) -> Tensor:
    """``[F_{i-1}, warp(F_{i-1}, O_{i->i-1}), F_i, warp(F_{i+1}, O_{i->i+1}), F_{i+1}]`` along channels."""
    warped_prev = backward_warp(features[PREV], flows.mid_to_prev)
    warped_next = backward_warp(features[NEXT], flows.mid_to_next)
    return concat([features[PREV], warped_prev, features[MID], warped_next, features[NEXT]], axis=0)


class _DeformableLayer(Module):
    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        c, m, t, k = config.channels, config.heads, config.frames, config.points
        self.heads, self.frames, self.points = m, t, k
        self.slope = config.leaky_slope
        dtype = config.dtype
        self.offset_head = Conv2d(6 * c, m * t * k * 2, 3, rng, dtype=dtype, zero_init=True)
        self.attention_head = Conv2d(6 * c, m * t * k, 3, rng, dtype=dtype, zero_init=True)
        self.value_proj = Conv2d(c, c, 3, rng, slope=self.slope, dtype=dtype)
        self.out_proj = Linear(c, rng, dtype=dtype)

    def _heads(self, cond: Tensor, features: Sequence[Tensor], query_frames: Sequence[int]) -> tuple[Tensor, Tensor]:
        """Offsets ``[Q, M, T, K, 2]`` and softmax-normalised weights ``[Q, M, T, K]``."""
        m, t, k = self.heads, self.frames, self.points
        inputs = stack([concat([cond, features[f]], axis=0) for f in query_frames], axis=0)
        queries = len(query_frames) * inputs.shape[2] * inputs.shape[3]
        offsets = self.offset_head(inputs).transpose(0, 2, 3, 1).reshape(queries, m, t, k, 2)
        logits = self.attention_head(inputs).transpose(0, 2, 3, 1).reshape(queries, m, t, k)
        weights = ops.softmax(logits, axes=(2, 3))
        check_normalized(weights)
        return offsets, weights

    def _values(self, features: Sequence[Tensor]) -> Tensor:
        """``[T, H, W, C]`` value projection of every frame."""
        return self.value_proj(stack(list(features), axis=0)).transpose(0, 2, 3, 1)

    def _attend(
        self,
        features: Sequence[Tensor],
        flows: FlowSet,
        base: BaseOffsetMap,
        query_frames: Sequence[int],
    ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        _, height, width = features[0].shape
        offsets, weights = self._heads(conditioning(features, flows), features, query_frames)
        values = self._values(features)
        located = phi(offsets, base, query_frames)
        reference = reference_points(height, width, len(query_frames), values.dtype)
        fused = deformable_attention(weights, located, values, reference, self.out_proj)
        return fused, weights, located, values


class MMALayer(_DeformableLayer):
    """Every pixel of every frame queries all three frames; returns three refined maps."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        super().__init__(config, rng)
        self.output_conv = Conv2d(config.channels, config.channels, 3, rng, slope=self.slope, dtype=config.dtype)

    def forward(self, features: Sequence[Tensor], flows: FlowSet, base: Optional[BaseOffsetMap] = None) -> AttentionResult:
        channels, height, width = _check_window(features, flows, "mma_forward")
        base = base or BaseOffsetMap.from_flow_set(flows)
        fused, weights, located, values = self._attend(features, flows, base, (PREV, MID, NEXT))
        # Frame-major queries: (t, y, x) -> [T, C, H, W].
        split = fused.reshape(3, height, width, channels).transpose(0, 3, 1, 2)
        refined = self.output_conv(split)
        return AttentionResult([refined[i] for i in range(3)], weights, located, values, fused)


class MSALayer(_DeformableLayer):
    """Only mid-frame pixels query the three frames; returns the fused mid-frame map."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        super().__init__(config, rng)
        self.fusion_conv = Conv2d(config.channels, config.channels, 3, rng, slope=self.slope, dtype=config.dtype)

    def forward(self, features: Sequence[Tensor], flows: FlowSet, base: Optional[BaseOffsetMap] = None) -> AttentionResult:
        channels, height, width = _check_window(features, flows, "msa_forward")
        # Mid-frame queries only need the adjacent pairs leaving the mid frame.
        base = base or BaseOffsetMap(flows.pairs(), 3, height, width, features[0].dtype)
        fused, weights, located, values = self._attend(features, flows, base, (MID,))
        merged = fused.reshape(1, height, width, channels).transpose(0, 3, 1, 2)
        output = self.fusion_conv(merged)
        return AttentionResult([output[0]], weights, located, values, fused)


class ConcatFusion(Module):
    """Stand-in for the MSA layer in ablations: flow-aligned concatenation and a 3x3 conv."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        c = config.channels
        self.fusion_conv = Conv2d(3 * c, c, 3, rng, slope=config.leaky_slope, dtype=config.dtype)

    def forward(self, features: Sequence[Tensor], flows: FlowSet) -> Tensor:
        _check_window(features, flows, "concat_fusion")
        aligned = concat(
            [
                backward_warp(features[PREV], flows.mid_to_prev),
                features[MID],
                backward_warp(features[NEXT], flows.mid_to_next),
            ],
            axis=0,
        )
        return self.fusion_conv(aligned.reshape(1, *aligned.shape))[0]


@dataclass
class STDAResult:
    fused: Tensor
    mma: Optional[AttentionResult]
    msa: Optional[AttentionResult]


class STDAModule(Module):
    """MMA followed by MSA; either layer can be switched off for the structural ablation."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.mma = MMALayer(config, rng) if config.use_mma else None
        self.msa = MSALayer(config, rng) if config.use_msa else None
        self.concat_fusion = None if config.use_msa else ConcatFusion(config, rng)

    def forward(self, features: Sequence[Tensor], flows: FlowSet) -> STDAResult:
        base = BaseOffsetMap.from_flow_set(flows) if self.mma is not None else None
        mma = self.mma(features, flows, base) if self.mma is not None else None
        coarse = mma.features if mma is not None else list(features)
        if self.msa is None:
            return STDAResult(self.concat_fusion(coarse, flows), mma, None)
        msa = self.msa(coarse, flows, base)
        return STDAResult(msa.features[0], mma, msa)


def export_attention_maps(weights: Tensor, height: int, width: int) -> np.ndarray:
    """
    Per-frame attention heatmaps of the mid-frame queries.

    :param weights: ``[H*W, M, T, K]`` MSA attention weights.
    :return: ``[T, H, W]`` with ``map[t](p) = sum_m sum_k A[p, m, t, k] / M``; maps sum to 1 pixelwise.
    """
    data = weights.data if isinstance(weights, Tensor) else np.asarray(weights)
    queries, heads, frames, _ = data.shape
    if queries != height * width:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="export_attention_maps", detail=f"{queries} queries for {height}x{width}")
        )
    per_frame = (data.sum(axis=3, dtype=np.float64).sum(axis=1) / heads).astype(data.dtype)
    return per_frame.T.reshape(frames, height, width)
