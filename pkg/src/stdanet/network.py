"""
STDANet: feature extraction, motion estimation, STDA fusion and reconstruction.

Images are ``[3, H, W]`` in ``[0, 1]`` with ``H`` and ``W`` divisible by 4; features and flows
live at quarter resolution.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from stdanet import ops
from stdanet.config import MESSAGES, NetworkConfig
from stdanet.exceptions import ShapeMismatchError
from stdanet.layers import Conv2d, ConvBlock, Module, UpBlock
from stdanet.sampling import MID, FlowSet
from stdanet.stda import STDAModule, STDAResult
from stdanet.tensor import Tensor, as_tensor, concat, no_grad, stack

logger = logging.getLogger(__name__)

Frames = Union[Tensor, np.ndarray, Sequence[Tensor]]


def _as_frames(frames: Frames, count: int, dtype) -> Tensor:
    if isinstance(frames, (list, tuple)):
        frames = stack([as_tensor(f, dtype=dtype) for f in frames], axis=0)
    frames = as_tensor(frames, dtype=dtype)
    if frames.ndim != 4 or frames.shape[0] != count or frames.shape[1] != 3:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="stdanet", detail=f"expected {count} RGB frames, got {frames.shape}")
        )
    if frames.shape[2] % 4 or frames.shape[3] % 4:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="encode", detail=f"frame size {frames.shape[2:]} not divisible by 4")
        )
    return frames


class Encoder(Module):
    """Three conv blocks (strides 1, 2, 2) to C/4, C/2 and C channels; frames share weights."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        c, n, s, d = config.channels, config.residual_blocks, config.leaky_slope, config.dtype
        self.blocks = [
            ConvBlock(3, c // 4, 1, n, rng, s, d),
            ConvBlock(c // 4, c // 2, 2, n, rng, s, d),
            ConvBlock(c // 2, c, 2, n, rng, s, d),
        ]

    def forward(self, frames: Tensor) -> Tensor:
        x = frames
        for block in self.blocks:
            x = block(x)
        return x


class MotionEstimator(Module):
    """
    Four stride-1 3x3 convs over the concatenated features: 3C -> C -> C/2 -> C/4 -> 8.

    The 8 output channels are the flows ``O_{i-1->i}``, ``O_{i->i-1}``, ``O_{i->i+1}``,
    ``O_{i+1->i}``, two channels each. The last layer starts at zero, so training starts
    from zero flow.
    """

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        c, s, d = config.channels, config.leaky_slope, config.dtype
        self.slope = s
        self.convs = [
            Conv2d(3 * c, c, 3, rng, slope=s, dtype=d),
            Conv2d(c, c // 2, 3, rng, slope=s, dtype=d),
            Conv2d(c // 2, c // 4, 3, rng, slope=s, dtype=d),
            Conv2d(c // 4, 8, 3, rng, slope=s, dtype=d, zero_init=True),
        ]

    def forward(self, features: Sequence[Tensor]) -> FlowSet:
        x = concat(list(features), axis=0)
        x = x.reshape(1, *x.shape)
        for conv in self.convs[:-1]:
            x = ops.leaky_relu(conv(x), self.slope)
        out = self.convs[-1](x)[0]
        return FlowSet(out[0:2], out[2:4], out[4:6], out[6:8])


class Decoder(Module):
    """Two (deconv stride 2 + residual blocks) stages, a stride-1 conv block and a 3-channel conv."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        c, n, s, d = config.channels, config.residual_blocks, config.leaky_slope, config.dtype
        self.up = [UpBlock(c, c // 2, n, rng, s, d), UpBlock(c // 2, c // 4, n, rng, s, d)]
        self.refine = ConvBlock(c // 4, c // 4, 1, n, rng, s, d)
        self.final = Conv2d(c // 4, 3, 3, rng, slope=s, dtype=d)

    def forward(self, fused: Tensor, blurry: Tensor) -> Tensor:
        x = fused
        for block in self.up:
            x = block(x)
        return blurry + self.final(self.refine(x))


@dataclass
class STDANetOutput:
    restored: Tensor
    flows: FlowSet
    stda: STDAResult


class STDANet(Module):
    """Restores the mid-frame of a three-frame window."""

    def __init__(self, config: NetworkConfig, rng: Optional[np.random.Generator] = None, seed: int = 0):
        self.config = config.validate()
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.encoder = Encoder(config, rng)
        self.motion = MotionEstimator(config, rng) if config.use_flow else None
        self.stda = STDAModule(config, rng)
        self.decoder = Decoder(config, rng)

    def encode(self, frames: Frames) -> list[Tensor]:
        frames = _as_frames(frames, 3, self.config.dtype)
        features = self.encoder(frames)
        return [features[i] for i in range(features.shape[0])]

    def estimate_motion(self, features: Sequence[Tensor]) -> FlowSet:
        if self.motion is None:
            _, height, width = features[0].shape
            return FlowSet.zeros(height, width, self.config.dtype)
        return self.motion(features)

    def decode(self, fused: Tensor, blurry_mid: Tensor) -> Tensor:
        fused = as_tensor(fused, dtype=self.config.dtype)
        blurry_mid = as_tensor(blurry_mid, dtype=self.config.dtype)
        restored = self.decoder(fused.reshape(1, *fused.shape), blurry_mid.reshape(1, *blurry_mid.shape))
        return restored[0]

    def forward(self, frames: Frames) -> STDANetOutput:
        frames = _as_frames(frames, 3, self.config.dtype)
        features = self.encode(frames)
        flows = self.estimate_motion(features)
        stda = self.stda(features, flows)
        restored = self.decode(stda.fused, frames[MID])
        return STDANetOutput(restored, flows, stda)

    def restore(self, frames: Frames) -> np.ndarray:
        """Inference: no graph recording, output clamped to ``[0, 1]``."""
        with no_grad():
            return np.clip(self.forward(frames).restored.data, 0.0, 1.0)


@dataclass
class StackOutput:
    restored: Tensor
    intermediates: list[Tensor]
    stages: list[STDANetOutput]


class STDANetStack(Module):
    """
    Cascaded two-stage restoration of the mid-frame of a five-frame window.

    Stage 1 restores frames i-1, i and i+1 from the three overlapping triplets; stage 2
    restores frame i from those three restorations. With ``share_stage_weights`` both stages
    are the same network.
    """

    def __init__(
        self,
        config: NetworkConfig,
        rng: Optional[np.random.Generator] = None,
        seed: int = 0,
        stage1: Optional[STDANet] = None,
    ):
        self.config = config.validate()
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.stage1 = stage1 if stage1 is not None else STDANet(config, rng)
        self.stage2 = self.stage1 if config.share_stage_weights else STDANet(config, rng)

    def forward(self, frames: Frames) -> StackOutput:
        frames = _as_frames(frames, 5, self.config.dtype)
        first = [self.stage1(frames[start : start + 3]) for start in range(3)]
        intermediates = [out.restored for out in first]
        second = self.stage2(stack(intermediates, axis=0))
        return StackOutput(second.restored, intermediates, first + [second])

    def restore(self, frames: Frames) -> np.ndarray:
        with no_grad():
            return np.clip(self.forward(frames).restored.data, 0.0, 1.0)


def build_model(config: NetworkConfig, stack_mode: bool = False, seed: int = 0) -> Union[STDANet, STDANetStack]:
    rng = np.random.default_rng(seed)
    model = STDANetStack(config, rng) if stack_mode else STDANet(config, rng)
    logger.info("built %s with %d parameters", type(model).__name__, model.num_parameters())
    return model
