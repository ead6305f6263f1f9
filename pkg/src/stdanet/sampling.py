"""
Bilinear sampling and flow-based backward warping.

Conventions used everywhere in the package:

* points are continuous ``(x, y)`` pixel coordinates, ``x`` rightward along W, ``y`` downward along H;
* out-of-range coordinates are clamped to ``[0, W-1] x [0, H-1]`` before the neighbour lookup
  (border replication); the clamped coordinate has zero derivative;
* a flow ``O_{a->b}`` is a ``[2, H, W]`` tensor (channel 0 = x, channel 1 = y) such that
  ``warp(F_b, O_{a->b})`` is ``F_b`` resampled onto frame ``a``;
* resizing uses the align-corners-false mapping ``src = (dst + 0.5) / factor - 0.5``.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from stdanet.config import MESSAGES
from stdanet.exceptions import FlowSetError, ShapeMismatchError
from stdanet.tensor import Tensor, as_tensor

# Frame indices inside a three-frame window.
PREV, MID, NEXT = 0, 1, 2


def pixel_grid(height: int, width: int, dtype="float32") -> np.ndarray:
    """``[H, W, 2]`` array holding the ``(x, y)`` coordinate of every pixel."""
    ys, xs = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.stack([xs, ys], axis=-1).astype(dtype)


def bilinear_gather(values: Tensor, points: Tensor) -> Tensor:
    """
    Batched bilinear lookup, the kernel behind every sampling operation.

    :param values: ``[G, H, W, D]`` maps, one per group.
    :param points: ``[G, P, 2]`` continuous ``(x, y)`` locations per group.
    :return: ``[G, P, D]`` blended values, differentiable in ``values`` and ``points``.
    """
    if values.ndim != 4 or points.ndim != 3 or points.shape[-1] != 2 or points.shape[0] != values.shape[0]:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="bilinear_gather", detail=f"values {values.shape}, points {points.shape}")
        )
    groups, height, width, depth = values.shape
    x, y = points.data[..., 0], points.data[..., 1]
    xc = np.clip(x, 0, width - 1)
    yc = np.clip(y, 0, height - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    wx = (xc - x0).astype(values.dtype)[..., None]
    wy = (yc - y0).astype(values.dtype)[..., None]

    base = (np.arange(groups) * height * width)[:, None]
    idx = [base + y0 * width + x0, base + y0 * width + x1, base + y1 * width + x0, base + y1 * width + x1]
    flat = values.data.reshape(groups * height * width, depth)
    v00, v01, v10, v11 = (flat[i] for i in idx)
    w = [(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy]
    out = v00 * w[0] + v01 * w[1] + v10 * w[2] + v11 * w[3]

    inside_x = ((x >= 0) & (x <= width - 1)).astype(values.dtype)
    inside_y = ((y >= 0) & (y <= height - 1)).astype(values.dtype)

    def grad_fn(g):
        grad_values = np.zeros_like(flat)
        for index, weight in zip(idx, w):
            np.add.at(grad_values, index.reshape(-1), (g * weight).reshape(-1, depth))
        dx = ((v01 - v00) * (1 - wy) + (v11 - v10) * wy) * g
        dy = ((v10 - v00) * (1 - wx) + (v11 - v01) * wx) * g
        grad_points = np.stack([dx.sum(-1) * inside_x, dy.sum(-1) * inside_y], axis=-1)
        return grad_values.reshape(values.shape), grad_points.astype(points.dtype)

    return Tensor._from_op(out, (values, points), grad_fn, "bilinear_gather")


def bilinear_sample(feature: Tensor, points: Tensor) -> Tensor:
    """
    Samples a ``[C, H, W]`` feature at ``[Q, 2]`` continuous points.

    :return: ``[C, Q]``; integer points return the stored values exactly.
    """
    feature, points = as_tensor(feature), as_tensor(points)
    if feature.ndim != 3 or points.ndim != 2 or points.shape[1] != 2:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="bilinear_sample", detail=f"feature {feature.shape}, points {points.shape}")
        )
    channels, height, width = feature.shape
    values = feature.transpose(1, 2, 0).reshape(1, height, width, channels)
    sampled = bilinear_gather(values, points.reshape(1, points.shape[0], 2))
    return sampled.reshape(points.shape[0], channels).transpose(1, 0)


def check_flow(flow: Tensor, height: int, width: int, op: str = "flow") -> None:
    if flow.shape != (2, height, width):
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op=op, detail=f"flow {flow.shape} for {height}x{width} features")
        )


def backward_warp(feature: Tensor, flow: Tensor) -> Tensor:
    """
    ``out[:, y, x] = feature sampled at (x + flow_x(x, y), y + flow_y(x, y))``.

    Zero flow reproduces ``feature`` bit for bit.
    """
    feature, flow = as_tensor(feature), as_tensor(flow)
    if feature.ndim != 3:
        raise ShapeMismatchError(MESSAGES["shape_mismatch"].format(op="backward_warp", detail=f"feature {feature.shape}"))
    channels, height, width = feature.shape
    check_flow(flow, height, width, "backward_warp")
    points = flow.transpose(1, 2, 0) + pixel_grid(height, width, flow.dtype)
    sampled = bilinear_sample(feature, points.reshape(height * width, 2))
    return sampled.reshape(channels, height, width)


def compose_flows(first: Tensor, second: Tensor) -> Tensor:
    """Chains ``O_{a->b}`` and ``O_{b->c}`` into ``O_{a->c} = O_{a->b} + warp(O_{b->c}, O_{a->b})``."""
    if first.shape != second.shape:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="compose_flows", detail=f"{first.shape} vs {second.shape}")
        )
    return first + backward_warp(second, first)


def resize_bilinear(image: Tensor, factor: Union[float, Fraction]) -> Tensor:
    """
    Bilinear resize of a ``[C, H, W]`` image by a rational factor (align-corners-false).

    Output dims are ``floor(H * factor)`` and ``floor(W * factor)``.
    """
    image = as_tensor(image)
    factor = Fraction(factor).limit_denominator(1000)
    channels, height, width = image.shape
    rows, cols = int(height * factor), int(width * factor)
    if rows < 1 or cols < 1:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="resize_bilinear", detail=f"{height}x{width} * {factor} is empty")
        )
    if factor == 1:
        return image
    scale = float(factor)
    xs = (np.arange(cols) + 0.5) / scale - 0.5
    ys = (np.arange(rows) + 0.5) / scale - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    points = np.stack([grid_x, grid_y], axis=-1).reshape(rows * cols, 2).astype(image.dtype)
    return bilinear_sample(image, Tensor(points)).reshape(channels, rows, cols)


@dataclass
class FlowSet:
    """
    The four adjacent-pair flows of a three-frame window, at feature resolution.

    ``prev_to_mid`` is ``O_{i-1 -> i}``, ``mid_to_prev`` is ``O_{i -> i-1}`` and so on.
    """

    prev_to_mid: Tensor
    mid_to_prev: Tensor
    mid_to_next: Tensor
    next_to_mid: Tensor

    @classmethod
    def zeros(cls, height: int, width: int, dtype="float32") -> "FlowSet":
        return cls(*(Tensor(np.zeros((2, height, width), dtype=dtype)) for _ in range(4)))

    @classmethod
    def from_pairs(cls, pairs: dict[tuple[int, int], Tensor]) -> "FlowSet":
        wanted = [(PREV, MID), (MID, PREV), (MID, NEXT), (NEXT, MID)]
        missing = [pair for pair in wanted if pairs.get(pair) is None]
        if missing:
            raise FlowSetError(MESSAGES["incomplete_flows"].format(missing=missing))
        return cls(*(pairs[pair] for pair in wanted))

    def pairs(self) -> dict[tuple[int, int], Tensor]:
        """Maps ``(source frame, destination frame)`` to ``O_{source -> destination}``."""
        return {
            (PREV, MID): self.prev_to_mid,
            (MID, PREV): self.mid_to_prev,
            (MID, NEXT): self.mid_to_next,
            (NEXT, MID): self.next_to_mid,
        }

    def validate(self, height: Optional[int] = None, width: Optional[int] = None) -> "FlowSet":
        missing = [pair for pair, flow in self.pairs().items() if flow is None]
        if missing:
            raise FlowSetError(MESSAGES["incomplete_flows"].format(missing=missing))
        if height is None:
            _, height, width = self.prev_to_mid.shape
        for flow in self.pairs().values():
            check_flow(flow, height, width, "flow set")
        return self

    @property
    def spatial(self) -> tuple[int, int]:
        return self.prev_to_mid.shape[1], self.prev_to_mid.shape[2]
