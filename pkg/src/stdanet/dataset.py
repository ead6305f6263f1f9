"""
On-disk video deblurring datasets.

Layout: ``<root>/<seq>/blur/%05d.png`` and ``<root>/<seq>/sharp/%05d.png`` plus an optional
``<root>/manifest.json`` listing every sequence with its split and the blurry-input baseline.
Trees without a manifest (DVD / GoPro style) are read with every sequence in the ``test`` split.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Optional, Union

import numpy as np

from stdanet import imageio
from stdanet.config import MESSAGES
from stdanet.exceptions import ConfigError, DatasetError, StdaError
from stdanet.metrics import psnr, ssim_or_nan
from stdanet.synth import DEFAULT_WINDOW, FrameWindow, SceneSpec, augment, random_scene, render_sequence, synthesize_blur

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = 1


@dataclass(frozen=True)
class SequencePlan:
    name: str
    scene: SceneSpec
    window: int
    seed: int
    split: str


def load_synth_plan(path: PathLike) -> list[SequencePlan]:
    """
    Reads a JSON synthesis spec.

    ``{"seed": 0, "window": 7, "sequences": [{"name": ..., "split": "train", "scene": {...}}]}``;
    a sequence may give ``"random": {...}`` keyword arguments of :func:`random_scene` instead of a
    scene, and may override ``window`` and ``seed``. Sequence ``n`` defaults to seed ``seed + n``.
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(MESSAGES["invalid_config"].format(detail=f"no such file {path}")) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(MESSAGES["invalid_config"].format(detail=f"{path}: {exc}")) from None
    return parse_synth_plan(spec)


def parse_synth_plan(spec: dict[str, Any]) -> list[SequencePlan]:
    base_seed = int(spec.get("seed", 0))
    default_window = int(spec.get("window", DEFAULT_WINDOW))
    plans = []
    for n, entry in enumerate(spec.get("sequences", [])):
        seed = int(entry.get("seed", base_seed + n))
        if "scene" in entry:
            scene = SceneSpec.from_dict(entry["scene"])
        elif "random" in entry:
            try:
                scene = random_scene(np.random.default_rng(seed), **entry["random"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(MESSAGES["invalid_config"].format(detail=f"random scene: {exc}")) from None
        else:
            raise ConfigError(
                MESSAGES["invalid_config"].format(detail=f"sequence {n} needs a 'scene' or 'random' entry")
            )
        name = entry.get("name", f"seq{n:03d}")
        plans.append(SequencePlan(name, scene, int(entry.get("window", default_window)), seed, entry.get("split", "train")))
    if not plans:
        raise ConfigError(MESSAGES["invalid_config"].format(detail="synthesis spec lists no sequences"))
    if len({p.name for p in plans}) != len(plans):
        raise ConfigError(MESSAGES["invalid_config"].format(detail="sequence names must be unique"))
    return plans


def baseline(blurry: np.ndarray, sharp: np.ndarray) -> tuple[float, float]:
    """Mean PSNR/SSIM of the blurry frames against the sharp ones; SSIM is NaN below 11x11."""
    scores = [(psnr(b, s), ssim_or_nan(b, s)) for b, s in zip(blurry, sharp)]
    return float(np.mean([p for p, _ in scores])), float(np.mean([q for _, q in scores]))


def _write_sequence(plan: SequencePlan, root: Path) -> dict[str, Any]:
    rendered = render_sequence(plan.scene, plan.seed)
    blurry = imageio.quantize(synthesize_blur(rendered, plan.window))
    sharp = imageio.quantize(rendered.sharp)
    for folder, frames in (("blur", blurry), ("sharp", sharp)):
        for i, frame in enumerate(frames):
            imageio.save_image(root / plan.name / folder / imageio.frame_name(i), frame)
    base_psnr, base_ssim = baseline(blurry, sharp)
    logger.info("wrote sequence %s: %d frames, baseline %.2f dB", plan.name, len(sharp), base_psnr)
    return {
        "name": plan.name,
        "split": plan.split,
        "frames": int(len(sharp)),
        "height": plan.scene.height,
        "width": plan.scene.width,
        "window": plan.window,
        "seed": plan.seed,
        "baseline_psnr": base_psnr,
        "baseline_ssim": base_ssim,
    }


def write_dataset(plans: list[SequencePlan], root: PathLike, workers: Optional[int] = None) -> dict[str, Any]:
    """Renders, blurs and writes every sequence (in parallel), then the manifest."""
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(MESSAGES["missing_dataset"].format(path=f"{root} ({exc})")) from None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        entries = list(pool.map(lambda plan: _write_sequence(plan, root), plans))
    manifest = {"format": MANIFEST_FORMAT, "sequences": entries}
    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest


def read_manifest(root: PathLike) -> Optional[dict[str, Any]]:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(MESSAGES["bad_sequence"].format(name=MANIFEST_NAME, detail=exc)) from None


@dataclass
class VideoSequence:
    name: str
    blurry: np.ndarray
    sharp: Optional[np.ndarray]
    split: str = "test"
    baseline_psnr: Optional[float] = None
    baseline_ssim: Optional[float] = None

    def __len__(self) -> int:
        return len(self.blurry)

    def window(self, center: int, length: int = 3) -> FrameWindow:
        """Frames ``center - length//2 .. center + length//2``, repeating the edge frames at the borders."""
        half = length // 2
        indices = np.clip(np.arange(center - half, center + half + 1), 0, len(self) - 1)
        sharp = None if self.sharp is None else self.sharp[indices]
        return FrameWindow(self.blurry[indices], sharp, self.name, center)


def load_sequence(directory: PathLike, split: str = "test", entry: Optional[dict] = None) -> VideoSequence:
    directory = Path(directory)
    try:
        blurry = imageio.load_frames(directory / "blur")
        sharp_dir = directory / "sharp"
        sharp = imageio.load_frames(sharp_dir) if sharp_dir.is_dir() else None
    except StdaError as exc:
        raise DatasetError(MESSAGES["bad_sequence"].format(name=directory.name, detail=exc)) from None
    if len(blurry) == 0:
        raise DatasetError(MESSAGES["bad_sequence"].format(name=directory.name, detail="no blurry frames"))
    if sharp is not None and sharp.shape != blurry.shape:
        raise DatasetError(
            MESSAGES["bad_sequence"].format(
                name=directory.name, detail=f"blur {blurry.shape} and sharp {sharp.shape} differ"
            )
        )
    entry = entry or {}
    return VideoSequence(directory.name, blurry, sharp, split, entry.get("baseline_psnr"), entry.get("baseline_ssim"))


class VideoDataset:
    """All sequences of one split, held in memory."""

    def __init__(self, root: PathLike, split: Optional[str] = None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DatasetError(MESSAGES["missing_dataset"].format(path=self.root))
        self.split = split
        manifest = read_manifest(self.root)
        if manifest is None:
            entries = [
                {"name": d.name, "split": "test"}
                for d in sorted(self.root.iterdir())
                if (d / "blur").is_dir()
            ]
        else:
            entries = manifest.get("sequences", [])
        self.sequences = [
            load_sequence(self.root / e["name"], e.get("split", "test"), e)
            for e in entries
            if split is None or e.get("split", "test") == split
        ]
        if not self.sequences:
            raise DatasetError(
                MESSAGES["bad_sequence"].format(name=split or "*", detail=f"no sequences under {self.root}")
            )
        logger.info("loaded %d sequences (%s split) from %s", len(self.sequences), split or "all", self.root)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[VideoSequence]:
        return iter(self.sequences)

    def windows(self, length: int = 3) -> Iterator[FrameWindow]:
        for sequence in self.sequences:
            for center in range(len(sequence)):
                yield sequence.window(center, length)

    def sample(
        self,
        rng: np.random.Generator,
        batch: int,
        length: int = 3,
        crop: Optional[int] = None,
        transforms: bool = True,
    ) -> list[FrameWindow]:
        """Random windows with a shared random crop/flip/rotation per window."""
        windows = []
        for _ in range(batch):
            sequence = self.sequences[int(rng.integers(len(self.sequences)))]
            if sequence.sharp is None:
                raise DatasetError(MESSAGES["bad_sequence"].format(name=sequence.name, detail="no sharp frames"))
            window = sequence.window(int(rng.integers(len(sequence))), length)
            height, width = window.spatial
            size = crop if crop is not None and crop < min(height, width) else None
            if size is None and (height % 4 or width % 4):
                size = 4 * (min(height, width) // 4)
            windows.append(augment(window, int(rng.integers(2**31)), size, transforms))
        return windows
