"""
Synthetic sharp/blurry video sequences.

A scene is rendered at ``factor`` virtual subframes per output frame; the sharp frame ``n`` is the
subframe at time ``n`` and its blurry counterpart is the mean of ``window`` subframes centred on
it. Pixel ``(x, y)`` covers the square ``[x - 0.5, x + 0.5] x [y - 0.5, y + 0.5]``.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Optional, Sequence

import numpy as np

from stdanet.config import MESSAGES
from stdanet.exceptions import BlurWindowError, ConfigError, CropError, ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_FACTOR = 8
DEFAULT_WINDOW = 7
_SUPERSAMPLE = 4


@dataclass(frozen=True)
class ShapeSpec:
    """
    A rigid textured shape moving at constant velocity.

    ``rect`` shapes are placed by their top-left corner and ``size = (w, h)``; ``disc`` shapes by
    their centre and ``radius``. Stripes of the given ``period`` move with the shape.
    """

    kind: str = "rect"
    x: float = 0.0
    y: float = 0.0
    size: tuple[float, float] = (16.0, 16.0)
    radius: float = 8.0
    velocity: tuple[float, float] = (0.0, 0.0)
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    texture: float = 0.0
    period: float = 6.0

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ShapeSpec":
        data = dict(data)
        for key in ("size", "velocity", "color"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        try:
            spec = cls(**data)
        except TypeError as exc:
            raise ConfigError(MESSAGES["invalid_config"].format(detail=f"shape: {exc}")) from None
        if spec.kind not in ("rect", "disc"):
            raise ConfigError(MESSAGES["invalid_config"].format(detail=f"unknown shape kind '{spec.kind}'"))
        if not np.all(np.isfinite(spec.velocity)):
            raise ConfigError(MESSAGES["invalid_config"].format(detail="shape velocity must be finite"))
        return spec


@dataclass(frozen=True)
class SceneSpec:
    height: int = 64
    width: int = 64
    frames: int = 8
    factor: int = DEFAULT_FACTOR
    shapes: tuple[ShapeSpec, ...] = ()
    camera: tuple[float, float] = (0.0, 0.0)
    background: tuple[float, float, float] = (0.3, 0.3, 0.3)
    background_texture: float = 0.0
    background_waves: int = 4

    def validate(self) -> "SceneSpec":
        if self.factor < 1 or self.frames < 1 or self.height < 1 or self.width < 1:
            raise ConfigError(
                MESSAGES["invalid_config"].format(detail="scene dims, frames and subframe factor must be >= 1")
            )
        if not np.all(np.isfinite(self.camera)):
            raise ConfigError(MESSAGES["invalid_config"].format(detail="camera velocity must be finite"))
        return self

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SceneSpec":
        data = dict(data)
        data["shapes"] = tuple(ShapeSpec.from_dict(s) for s in data.get("shapes", ()))
        for key in ("camera", "background"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigError(MESSAGES["invalid_config"].format(detail=f"scene: {exc}")) from None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class RenderedSequence:
    """``subframes[pad + n * factor]`` is sharp frame ``n``."""

    subframes: np.ndarray
    factor: int
    frames: int

    @property
    def pad(self) -> int:
        return self.factor // 2

    @property
    def sharp(self) -> np.ndarray:
        return self.subframes[self.pad :: self.factor][: self.frames]


def _rect_coverage(centres: np.ndarray, start: float, length: float) -> np.ndarray:
    """Exact 1-D overlap of each unit pixel with ``[start, start + length]``."""
    return np.clip(np.minimum(centres + 0.5, start + length) - np.maximum(centres - 0.5, start), 0.0, 1.0)


def _disc_coverage(xs: np.ndarray, ys: np.ndarray, cx: float, cy: float, radius: float) -> np.ndarray:
    offsets = (np.arange(_SUPERSAMPLE) + 0.5) / _SUPERSAMPLE - 0.5
    hits = np.zeros(np.broadcast(ys, xs).shape)
    for oy in offsets:
        for ox in offsets:
            hits += ((xs + ox - cx) ** 2 + (ys + oy - cy) ** 2) <= radius**2
    return hits / _SUPERSAMPLE**2


class _Background:
    def __init__(self, spec: SceneSpec, rng: np.random.Generator):
        self.base = np.asarray(spec.background, dtype=np.float64)[:, None, None]
        self.amplitude = spec.background_texture
        n = max(spec.background_waves, 1)
        self.freq = rng.uniform(0.05, 0.4, size=(n, 2)) * rng.choice([-1.0, 1.0], size=(n, 2))
        self.phase = rng.uniform(0.0, 2 * np.pi, size=n)
        self.mix = rng.uniform(-1.0, 1.0, size=(n, 3))

    def render(self, xs: np.ndarray, ys: np.ndarray, shift: tuple[float, float]) -> np.ndarray:
        image = np.broadcast_to(self.base, (3,) + np.broadcast(ys, xs).shape).copy()
        if self.amplitude == 0:
            return image
        u, v = xs + shift[0], ys + shift[1]
        for (fx, fy), phase, mix in zip(self.freq, self.phase, self.mix):
            wave = np.sin(fx * u + fy * v + phase)
            image += self.amplitude * mix[:, None, None] * wave / len(self.phase)
        return image


def _render_subframe(spec: SceneSpec, background: _Background, tau: float) -> np.ndarray:
    ys = np.arange(spec.height, dtype=np.float64)[:, None]
    xs = np.arange(spec.width, dtype=np.float64)[None, :]
    cam_x, cam_y = spec.camera[0] * tau, spec.camera[1] * tau
    image = background.render(xs, ys, (cam_x, cam_y))
    for shape in spec.shapes:
        ox = shape.x + shape.velocity[0] * tau - cam_x
        oy = shape.y + shape.velocity[1] * tau - cam_y
        if shape.kind == "rect":
            coverage = _rect_coverage(ys, oy, shape.size[1]) * _rect_coverage(xs, ox, shape.size[0])
            phase_origin = ox
        else:
            coverage = _disc_coverage(xs, ys, ox, oy, shape.radius)
            phase_origin = ox - shape.radius
        color = np.asarray(shape.color, dtype=np.float64)[:, None, None]
        if shape.texture:
            stripes = 1.0 + shape.texture * np.cos(2 * np.pi * (xs - phase_origin) / shape.period)
            color = color * stripes[None]
        image = image * (1.0 - coverage) + color * coverage
    return np.clip(image, 0.0, 1.0)


def render_sequence(spec: SceneSpec, seed: int = 0) -> RenderedSequence:
    """
    Renders ``(frames - 1) * factor + 1 + 2 * (factor // 2)`` subframes of the scene.

    Deterministic given ``(spec, seed)``; the seed only drives the background texture.
    """
    spec.validate()
    background = _Background(spec, np.random.default_rng(seed))
    pad = spec.factor // 2
    count = (spec.frames - 1) * spec.factor + 1 + 2 * pad
    subframes = np.stack(
        [_render_subframe(spec, background, (j - pad) / spec.factor) for j in range(count)]
    ).astype(np.float32)
    logger.debug("rendered %d subframes of %dx%d", count, spec.height, spec.width)
    return RenderedSequence(subframes, spec.factor, spec.frames)


def synthesize_blur(sequence: RenderedSequence, window: int) -> np.ndarray:
    """
    Blurry frames as the mean of ``window`` subframes centred on each sharp frame.

    :raises BlurWindowError: If ``window`` is even, below 1 or exceeds the subframe factor.
    """
    if window < 1 or window % 2 == 0 or window > sequence.factor:
        raise BlurWindowError(MESSAGES["blur_window"].format(window=window, limit=sequence.factor))
    half = window // 2
    blurry = []
    for n in range(sequence.frames):
        centre = sequence.pad + n * sequence.factor
        # float64 sums of float32 values keep static scenes bit-exact.
        span = sequence.subframes[centre - half : centre + half + 1].astype(np.float64)
        blurry.append(span.mean(axis=0))
    return np.stack(blurry).astype(np.float32)


def random_scene(
    rng: np.random.Generator,
    height: int = 64,
    width: int = 64,
    frames: int = 8,
    shapes: int = 3,
    max_speed: float = 3.0,
    factor: int = DEFAULT_FACTOR,
) -> SceneSpec:
    """A random scene of textured rects and discs over a textured background."""
    items = []
    for _ in range(shapes):
        kind = "rect" if rng.random() < 0.5 else "disc"
        items.append(
            ShapeSpec(
                kind=kind,
                x=float(rng.uniform(0, width)),
                y=float(rng.uniform(0, height)),
                size=(float(rng.uniform(min(8, width / 2), width / 2)), float(rng.uniform(min(8, height / 2), height / 2))),
                radius=float(rng.uniform(min(4, min(height, width) / 4), min(height, width) / 4)),
                velocity=(float(rng.uniform(-max_speed, max_speed)), float(rng.uniform(-max_speed, max_speed))),
                color=tuple(float(c) for c in rng.uniform(0.05, 0.95, size=3)),
                texture=float(rng.uniform(0.0, 0.5)),
                period=float(rng.uniform(3.0, 10.0)),
            )
        )
    return SceneSpec(
        height=height,
        width=width,
        frames=frames,
        factor=factor,
        shapes=tuple(items),
        camera=(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))),
        background=tuple(float(c) for c in rng.uniform(0.2, 0.6, size=3)),
        background_texture=float(rng.uniform(0.1, 0.3)),
    ).validate()


@dataclass(frozen=True, eq=False)
class FrameWindow:
    """
    Blurry frames of a 3- or 5-frame window centred on the frame to restore, plus sharp targets.

    Arrays are ``[T, 3, H, W]`` in ``[0, 1]`` and read-only.
    """

    blurry: np.ndarray
    sharp: Optional[np.ndarray] = None
    name: str = ""
    index: int = 0

    def __post_init__(self):
        if self.blurry.ndim != 4 or self.blurry.shape[0] not in (3, 5) or self.blurry.shape[1] != 3:
            raise ShapeMismatchError(
                MESSAGES["shape_mismatch"].format(op="FrameWindow", detail=f"blurry {self.blurry.shape}")
            )
        if self.sharp is not None and self.sharp.shape != self.blurry.shape:
            raise ShapeMismatchError(
                MESSAGES["shape_mismatch"].format(
                    op="FrameWindow", detail=f"sharp {self.sharp.shape} vs blurry {self.blurry.shape}"
                )
            )
        for array in (self.blurry, self.sharp):
            if array is not None:
                array.setflags(write=False)

    @property
    def length(self) -> int:
        return self.blurry.shape[0]

    @property
    def mid(self) -> int:
        return self.length // 2

    @property
    def spatial(self) -> tuple[int, int]:
        return self.blurry.shape[2], self.blurry.shape[3]


@dataclass(frozen=True)
class AugmentPlan:
    """A crop followed by flips and ``rotations`` quarter turns, shared by every frame."""

    top: int = 0
    left: int = 0
    size: Optional[int] = None
    flip_h: bool = False
    flip_v: bool = False
    rotations: int = 0

    @classmethod
    def identity(cls) -> "AugmentPlan":
        return cls()


def draw_augment_plan(
    rng: np.random.Generator, height: int, width: int, crop: Optional[int] = None, transforms: bool = True
) -> AugmentPlan:
    if crop is not None and (crop <= 0 or crop % 4 or crop > height or crop > width):
        raise CropError(MESSAGES["crop"].format(crop=crop, height=height, width=width))
    top = int(rng.integers(0, height - crop + 1)) if crop else 0
    left = int(rng.integers(0, width - crop + 1)) if crop else 0
    if not transforms:
        return AugmentPlan(top, left, crop)
    return AugmentPlan(
        top, left, crop, bool(rng.integers(0, 2)), bool(rng.integers(0, 2)), int(rng.integers(0, 4))
    )


def _transform(frames: np.ndarray, plan: AugmentPlan) -> np.ndarray:
    if plan.size is not None:
        frames = frames[..., plan.top : plan.top + plan.size, plan.left : plan.left + plan.size]
    if plan.flip_h:
        frames = frames[..., ::-1]
    if plan.flip_v:
        frames = frames[..., ::-1, :]
    if plan.rotations % 4:
        frames = np.rot90(frames, k=plan.rotations, axes=(-2, -1))
    return np.ascontiguousarray(frames)


def apply_plan(window: FrameWindow, plan: AugmentPlan) -> FrameWindow:
    sharp = None if window.sharp is None else _transform(window.sharp, plan)
    return FrameWindow(_transform(window.blurry, plan), sharp, window.name, window.index)


def augment(
    window: FrameWindow, seed: Optional[int] = None, crop: Optional[int] = None, transforms: bool = True
) -> FrameWindow:
    """
    Random crop, flip and rotation applied identically to every blurry and sharp frame.

    ``seed=None`` with no crop is the identity.
    """
    if seed is None and crop is None:
        return apply_plan(window, AugmentPlan.identity())
    rng = np.random.default_rng(seed)
    return apply_plan(window, draw_augment_plan(rng, *window.spatial, crop=crop, transforms=transforms))


def make_window(frames: Sequence[np.ndarray], sharp: Optional[Sequence[np.ndarray]] = None, **meta) -> FrameWindow:
    blurry = np.stack([np.asarray(f, dtype=np.float32) for f in frames])
    targets = None if sharp is None else np.stack([np.asarray(f, dtype=np.float32) for f in sharp])
    return FrameWindow(blurry, targets, **meta)
