import logging
import os
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from stdanet.config import MESSAGES, UI
from stdanet.exceptions import ImageFormatError, ShapeMismatchError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def load_image(path: PathLike) -> np.ndarray:
    """
    Reads an 8-bit image file as a ``[3, H, W]`` float32 array in ``[0, 1]``.

    :param path: Image file, any format Pillow decodes; grayscale and alpha are converted to RGB.
    :type path: PathLike
    :raises ImageFormatError: If the file is missing or cannot be decoded.
    :return: The image.
    :rtype: np.ndarray
    """
    path = Path(path)
    if not path.is_file():
        raise ImageFormatError(MESSAGES["missing_image"].format(path=path))
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(MESSAGES["bad_image"].format(path=path, detail=exc)) from None
    return rgb.transpose(2, 0, 1).astype(np.float32) / 255.0


def _to_uint8(array: np.ndarray) -> np.ndarray:
    return np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path: PathLike, image: np.ndarray) -> Path:
    """Writes a ``[3, H, W]`` array in ``[0, 1]`` as an 8-bit RGB image (values are clipped)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatchError(MESSAGES["shape_mismatch"].format(op="save_image", detail=f"image {image.shape}"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(image.transpose(1, 2, 0))).save(path)
    return path


def save_grayscale(path: PathLike, image: np.ndarray) -> Path:
    """Writes a ``[H, W]`` array in ``[0, 1]`` as an 8-bit grayscale image."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ShapeMismatchError(MESSAGES["shape_mismatch"].format(op="save_grayscale", detail=f"image {image.shape}"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_uint8(image)).save(path)
    return path


def list_frames(directory: PathLike) -> list[Path]:
    """Image files of ``directory`` in lexicographic order (zero-padded names sort by index)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageFormatError(MESSAGES["missing_image"].format(path=directory))
    extensions = tuple(UI["image_extensions"])
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in extensions)


def load_frames(directory: PathLike) -> np.ndarray:
    """All frames of ``directory`` stacked to ``[N, 3, H, W]``."""
    paths = list_frames(directory)
    if not paths:
        return np.zeros((0, 3, 0, 0), dtype=np.float32)
    frames = [load_image(p) for p in paths]
    if len({f.shape for f in frames}) != 1:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="load_frames", detail=f"frames of {directory} differ in size")
        )
    logger.debug("loaded %d frames from %s", len(frames), directory)
    return np.stack(frames)


def frame_name(index: int) -> str:
    return f"{index:05d}.png"


def quantize(image: np.ndarray) -> np.ndarray:
    """The float32 values :func:`load_image` returns after a :func:`save_image` round trip."""
    return _to_uint8(np.asarray(image)).astype(np.float32) / 255.0
