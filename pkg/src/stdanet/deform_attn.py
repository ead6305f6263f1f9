"""
Deformable attention over a short frame window.

Shapes, with Q queries, M heads, T frames, K sampling points and C channels:

* attention weights ``A``: ``[Q, M, T, K]``, non-negative, summing to 1 over ``(T, K)``;
* sampling offsets ``P``: ``[Q, M, T, K, 2]`` in feature pixels, ``(x, y)`` order;
* values ``E``: ``[T, H, W, C]``, split per head into M contiguous groups of ``C / M`` channels.

Queries are ordered frame-major, ``(t, y, x)``; each query's reference point is its own pixel.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from stdanet.config import CONFIG, MESSAGES
from stdanet.exceptions import FlowSetError, NormalizationError, ShapeMismatchError
from stdanet.layers import Linear
from stdanet.sampling import NEXT, PREV, FlowSet, bilinear_gather, check_flow, compose_flows, pixel_grid
from stdanet.tensor import Tensor, concat, stack

logger = logging.getLogger(__name__)


def reference_points(height: int, width: int, blocks: int = 1, dtype="float32") -> np.ndarray:
    """``[blocks * H * W, 2]`` pixel centres, repeated for each block of frame-major queries."""
    grid = pixel_grid(height, width, dtype).reshape(height * width, 2)
    return np.tile(grid, (blocks, 1))


class BaseOffsetMap:
    """
    Base displacement for every (query frame, value frame) pair.

    ``get(src, dst)`` is the flow ``O_{src -> dst}``: a query in frame ``src`` at pixel ``p`` looks
    for its correspondence in frame ``dst`` around ``p + O_{src -> dst}(p)``. Diagonal entries
    are exactly zero.
    """

    def __init__(self, flows: dict[tuple[int, int], Tensor], frames: int, height: int, width: int, dtype="float32"):
        self.frames = frames
        self.height = height
        self.width = width
        self._flows: dict[tuple[int, int], Tensor] = {}
        for (src, dst), flow in flows.items():
            check_flow(flow, height, width, "base offsets")
            if src == dst and np.any(flow.data != 0):
                raise FlowSetError(MESSAGES["missing_flow"].format(src=src, dst=dst) + " (diagonal must be zero)")
            self._flows[(src, dst)] = flow
        for t in range(frames):
            self._flows[(t, t)] = Tensor(np.zeros((2, height, width), dtype=dtype))

    @classmethod
    def from_flow_set(cls, flows: FlowSet) -> "BaseOffsetMap":
        """Adjacent pairs as estimated plus the two composed pairs ``i-1 <-> i+1``."""
        height, width = flows.spatial
        pairs = dict(flows.validate().pairs())
        pairs[(PREV, NEXT)] = compose_flows(flows.prev_to_mid, flows.mid_to_next)
        pairs[(NEXT, PREV)] = compose_flows(flows.next_to_mid, flows.mid_to_prev)
        return cls(pairs, 3, height, width, flows.prev_to_mid.dtype)

    @classmethod
    def zeros(cls, frames: int, height: int, width: int, dtype="float32") -> "BaseOffsetMap":
        return cls({}, frames, height, width, dtype)

    def get(self, src: int, dst: int) -> Tensor:
        try:
            return self._flows[(src, dst)]
        except KeyError:
            raise FlowSetError(MESSAGES["missing_flow"].format(src=src, dst=dst)) from None

    def row(self, src: int) -> Tensor:
        """``[H*W, T, 2]`` base offsets of the queries of frame ``src`` towards every frame."""
        per_frame = [
            self.get(src, dst).transpose(1, 2, 0).reshape(self.height * self.width, 2)
            for dst in range(self.frames)
        ]
        return stack(per_frame, axis=1)


def phi(offsets: Tensor, base: BaseOffsetMap, query_frames: Sequence[int]) -> Tensor:
    """
    Adds base flows to learned sampling offsets.

    :param offsets: ``[Q, M, T, K, 2]`` learned offsets.
    :param base: Base offsets for every (query frame, value frame) pair.
    :param query_frames: Frame of each consecutive block of ``H * W`` queries, e.g. ``[0, 1, 2]``
        for multi-to-multi queries or ``[1]`` for mid-frame queries.
    :return: ``out[q, m, t, k] = offsets[q, m, t, k] + base[frame(q) -> t](pixel(q))``.
    """
    queries, heads, frames, points, _ = offsets.shape
    if queries != len(query_frames) * base.height * base.width or frames != base.frames:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(
                op="phi",
                detail=f"offsets {offsets.shape} vs {len(query_frames)} frames of {base.height}x{base.width}",
            )
        )
    rows = concat([base.row(frame) for frame in query_frames], axis=0)
    return offsets + rows.reshape(queries, 1, frames, 1, 2)


def check_normalized(weights: Tensor) -> float:
    """Raises :class:`NormalizationError` unless ``weights`` sum to 1 over ``(T, K)``."""
    tolerance = CONFIG["normalization_tolerance"].get(str(weights.dtype), 1e-6)
    if np.any(weights.data < 0):
        raise NormalizationError(MESSAGES["normalization"].format(dev=float(-weights.data.min())))
    deviation = float(np.abs(weights.data.sum(axis=(2, 3), dtype=np.float64) - 1.0).max()) if weights.size else 0.0
    if deviation > tolerance:
        raise NormalizationError(MESSAGES["normalization"].format(dev=deviation))
    return deviation


def deformable_attention(
    weights: Tensor,
    offsets: Tensor,
    values: Tensor,
    reference: np.ndarray,
    out_proj: Optional[Linear] = None,
) -> Tensor:
    """
    Attention-weighted sum of bilinear samples around each query's reference point.

    ``head_m(q) = sum_t sum_k A[q,m,t,k] * sample(E_t^m, ref(q) + P[q,m,t,k])``; heads are
    concatenated along channels and mapped by ``out_proj`` (identity when ``None``).

    :param weights: ``[Q, M, T, K]`` normalised attention weights.
    :param offsets: ``[Q, M, T, K, 2]`` sampling offsets (base flows already added by :func:`phi`).
    :param values: ``[T, H, W, C]`` value features.
    :param reference: ``[Q, 2]`` reference pixel of each query.
    :param out_proj: ``[C, C]`` linear map plus bias applied per query.
    :return: ``[Q, C]``.
    """
    queries, heads, frames, points = weights.shape
    t_values, height, width, channels = values.shape
    if (
        offsets.shape != (queries, heads, frames, points, 2)
        or t_values != frames
        or channels % heads
        or reference.shape != (queries, 2)
    ):
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(
                op="deformable_attention",
                detail=f"A {weights.shape}, P {offsets.shape}, E {values.shape}, ref {reference.shape}",
            )
        )
    check_normalized(weights)
    depth = channels // heads

    locations = offsets + reference.astype(offsets.dtype)[:, None, None, None, :]
    per_head = values.reshape(frames, height, width, heads, depth).transpose(0, 3, 1, 2, 4)
    per_head = per_head.reshape(frames * heads, height, width, depth)
    grouped = locations.transpose(2, 1, 0, 3, 4).reshape(frames * heads, queries * points, 2)

    sampled = bilinear_gather(per_head, grouped)
    sampled = sampled.reshape(frames, heads, queries, points, depth).transpose(2, 1, 0, 3, 4)
    blended = (sampled * weights.reshape(queries, heads, frames, points, 1)).sum(axis=(2, 3))
    fused = blended.reshape(queries, channels)
    if out_proj is None:
        return fused
    return out_proj(fused)
