"""
Checkpoints as ``.npz`` archives, never pickles.

Field order: ``format_version`` (int), ``config`` (run-config text), ``step`` (int),
``param_names`` (ordered names), then ``param/<name>`` as float32 for every parameter.
"""

import dataclasses
import logging
import os
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from stdanet.config import CONFIG, MESSAGES, RunConfig
from stdanet.exceptions import CheckpointError
from stdanet.layers import Module
from stdanet.network import STDANet, STDANetStack, build_model

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
PARAM_PREFIX = "param/"


@dataclass
class Checkpoint:
    config: RunConfig
    params: dict[str, np.ndarray]
    step: int = 0
    version: int = CONFIG["checkpoint_format"]


def save_checkpoint(path: PathLike, model: Module, config: RunConfig, step: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    named = list(model.named_parameters())
    fields: dict[str, np.ndarray] = {
        "format_version": np.array(CONFIG["checkpoint_format"], dtype=np.int64),
        "config": np.array(config.to_text()),
        "step": np.array(step, dtype=np.int64),
        "param_names": np.array([name for name, _ in named]),
    }
    for name, tensor in named:
        fields[PARAM_PREFIX + name] = tensor.data.astype(np.float32)
    # np.savez appends ".npz" to bare names; a file handle keeps the path as given.
    with open(path, "wb") as handle:
        np.savez(handle, **fields)
    logger.info("saved checkpoint %s (step %d, %d tensors)", path, step, len(named))
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    """
    Reads a checkpoint without unpickling anything.

    :raises CheckpointError: If the file is missing, unreadable or of another format version.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(MESSAGES["checkpoint_missing"].format(path=path))
    try:
        with np.load(path, allow_pickle=False) as archive:
            version = int(archive["format_version"])
            if version != CONFIG["checkpoint_format"]:
                raise CheckpointError(
                    MESSAGES["checkpoint_version"].format(found=version, expected=CONFIG["checkpoint_format"])
                )
            config = RunConfig.from_text(str(archive["config"]), f"{path}:config")
            names = [str(n) for n in archive["param_names"]]
            params = {name: np.array(archive[PARAM_PREFIX + name]) for name in names}
            step = int(archive["step"])
    except (KeyError, ValueError, OSError, zipfile.BadZipFile) as exc:
        raise CheckpointError(MESSAGES["checkpoint_mismatch"].format(detail=f"{path}: {exc}")) from None
    return Checkpoint(config, params, step, version)


def restore_model(checkpoint: Checkpoint, stack: bool = False) -> Union[STDANet, STDANetStack]:
    """
    Builds the model the checkpoint's config describes and loads its parameters.

    ``stack=True`` on a single-network checkpoint runs that network as both stages.
    """
    network = checkpoint.config.network
    if checkpoint.config.stack:
        model = build_model(network, stack_mode=True, seed=checkpoint.config.seed)
        model.load_state_dict(checkpoint.params)
        return model
    single = build_model(network, stack_mode=False, seed=checkpoint.config.seed)
    single.load_state_dict(checkpoint.params)
    if not stack:
        return single
    return STDANetStack(dataclasses.replace(network, share_stage_weights=True), stage1=single)
