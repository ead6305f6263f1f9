"""
Analytic multiply-accumulate counts for STDANet.

Counts follow the layer list of :mod:`stdanet.network` without building the model:

* conv: ``Cout * Cin * k * k * Hout * Wout``;
* transposed conv: ``Cin * Cout * k * k * Hin * Win`` (every input pixel scatters a full kernel);
* deformable attention: ``Q * M * T * K * (4 * C/M + C/M)`` for the four bilinear taps plus the
  weighted blend, and ``Q * C * C`` for the output projection.

Warps, activations and additions are not counted.
"""

import logging
from dataclasses import dataclass

import pandas as pd

from stdanet.config import MESSAGES, NetworkConfig
from stdanet.exceptions import ShapeMismatchError

logger = logging.getLogger(__name__)

GIGA = 1e9


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    macs: int


def conv_macs(in_channels: int, out_channels: int, kernel: int, out_height: int, out_width: int) -> int:
    return out_channels * in_channels * kernel * kernel * out_height * out_width


def deconv_macs(in_channels: int, out_channels: int, kernel: int, in_height: int, in_width: int) -> int:
    return in_channels * out_channels * kernel * kernel * in_height * in_width


def attention_macs(queries: int, heads: int, frames: int, points: int, channels: int) -> int:
    depth = channels // heads
    return queries * heads * frames * points * (4 * depth + depth)


class _Counter:
    def __init__(self):
        self.layers: list[LayerCost] = []

    def conv(self, name: str, cin: int, cout: int, k: int, h: int, w: int, repeat: int = 1) -> None:
        self.layers.append(LayerCost(name, "conv", repeat * conv_macs(cin, cout, k, h, w)))

    def deconv(self, name: str, cin: int, cout: int, k: int, h: int, w: int, repeat: int = 1) -> None:
        self.layers.append(LayerCost(name, "deconv", repeat * deconv_macs(cin, cout, k, h, w)))

    def attention(self, name: str, queries: int, config: NetworkConfig) -> None:
        c = config.channels
        macs = attention_macs(queries, config.heads, config.frames, config.points, c)
        self.layers.append(LayerCost(f"{name}.sample", "attention", macs))
        self.layers.append(LayerCost(f"{name}.out_proj", "linear", queries * c * c))

    def residuals(self, name: str, channels: int, blocks: int, h: int, w: int, repeat: int) -> None:
        for b in range(blocks):
            for conv in ("conv1", "conv2"):
                self.conv(f"{name}.blocks.{b}.{conv}", channels, channels, 3, h, w, repeat)


def _count_stda(counter: _Counter, config: NetworkConfig, h: int, w: int) -> None:
    c, m, t, k = config.channels, config.heads, config.frames, config.points
    hw = h * w
    if config.use_mma:
        counter.conv("stda.mma.offset_head", 6 * c, m * t * k * 2, 3, h, w, repeat=3)
        counter.conv("stda.mma.attention_head", 6 * c, m * t * k, 3, h, w, repeat=3)
        counter.conv("stda.mma.value_proj", c, c, 3, h, w, repeat=3)
        counter.attention("stda.mma", 3 * hw, config)
        counter.conv("stda.mma.output_conv", c, c, 3, h, w, repeat=3)
    if config.use_msa:
        counter.conv("stda.msa.offset_head", 6 * c, m * t * k * 2, 3, h, w)
        counter.conv("stda.msa.attention_head", 6 * c, m * t * k, 3, h, w)
        counter.conv("stda.msa.value_proj", c, c, 3, h, w, repeat=3)
        counter.attention("stda.msa", hw, config)
        counter.conv("stda.msa.fusion_conv", c, c, 3, h, w)
    else:
        counter.conv("stda.concat_fusion.fusion_conv", 3 * c, c, 3, h, w)


def layer_costs(config: NetworkConfig, height: int, width: int) -> list[LayerCost]:
    """Per-layer MAC counts of one STDANet application to a three-frame window of ``height x width``."""
    config.validate()
    if height <= 0 or width <= 0 or height % 4 or width % 4:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="count_gmacs", detail=f"{height}x{width} not divisible by 4")
        )
    c, n = config.channels, config.residual_blocks
    counter = _Counter()

    # Encoder, shared across the three frames.
    sizes = [(height, width), (height // 2, width // 2), (height // 4, width // 4)]
    widths = [3, c // 4, c // 2, c]
    for i, (h, w) in enumerate(sizes):
        counter.conv(f"encoder.blocks.{i}.conv", widths[i], widths[i + 1], 3, h, w, repeat=3)
        counter.residuals(f"encoder.blocks.{i}", widths[i + 1], n, h, w, repeat=3)

    h, w = sizes[-1]
    if config.use_flow:
        for i, (cin, cout) in enumerate([(3 * c, c), (c, c // 2), (c // 2, c // 4), (c // 4, 8)]):
            counter.conv(f"motion.convs.{i}", cin, cout, 3, h, w)

    _count_stda(counter, config, h, w)

    counter.deconv("decoder.up.0.deconv", c, c // 2, 4, h, w)
    counter.residuals("decoder.up.0", c // 2, n, 2 * h, 2 * w, repeat=1)
    counter.deconv("decoder.up.1.deconv", c // 2, c // 4, 4, 2 * h, 2 * w)
    counter.residuals("decoder.up.1", c // 4, n, height, width, repeat=1)
    counter.conv("decoder.refine.conv", c // 4, c // 4, 3, height, width)
    counter.residuals("decoder.refine", c // 4, n, height, width, repeat=1)
    counter.conv("decoder.final", c // 4, 3, 3, height, width)
    return counter.layers


def count_gmacs(config: NetworkConfig, height: int, width: int, stack: bool = False) -> float:
    """Total GMACs; stack mode runs the network four times."""
    total = sum(layer.macs for layer in layer_costs(config, height, width))
    if stack:
        total *= 4
    return total / GIGA


def gmacs_table(config: NetworkConfig, height: int, width: int) -> pd.DataFrame:
    """Per-layer report with a ``gmacs`` column, as printed by ``stdanet gmacs``."""
    frame = pd.DataFrame([vars(layer) for layer in layer_costs(config, height, width)])
    frame["gmacs"] = frame["macs"] / GIGA
    return frame
