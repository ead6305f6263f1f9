import numpy as np
import pytest

from stdanet.checkpoint import load_checkpoint, restore_model, save_checkpoint
from stdanet.config import RunConfig
from stdanet.exceptions import CheckpointError
from stdanet.network import STDANet, STDANetStack, build_model

CONFIG = RunConfig(channels=8, heads=2, points=2, residual_blocks=1, seed=5)


def test_round_trip(tmp_path, rng):
    model = build_model(CONFIG.network, seed=CONFIG.seed)
    for tensor in model.parameters():
        tensor.data = rng.normal(size=tensor.shape).astype(tensor.dtype)

    path = save_checkpoint(tmp_path / "ckpt", model, CONFIG, step=42)
    checkpoint = load_checkpoint(path)
    restored = restore_model(checkpoint)

    assert path.name == "ckpt"
    assert checkpoint.step == 42
    assert checkpoint.config == CONFIG
    for (name, a), (_, b) in zip(model.named_parameters(), restored.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)


def test_fields_are_written_in_order(tmp_path):
    model = build_model(CONFIG.network)
    path = save_checkpoint(tmp_path / "ckpt.npz", model, CONFIG)

    with np.load(path, allow_pickle=False) as archive:
        files = archive.files
        assert archive[files[4]].dtype == np.float32

    names = [name for name, _ in model.named_parameters()]
    assert files[:4] == ["format_version", "config", "step", "param_names"]
    assert files[4:] == ["param/" + name for name in names]


def test_float64_models_are_stored_as_float32(tmp_path):
    config = CONFIG.replace(dtype="float64")
    model = build_model(config.network)

    checkpoint = load_checkpoint(save_checkpoint(tmp_path / "ckpt.npz", model, config))

    assert all(p.dtype == np.float32 for p in checkpoint.params.values())
    assert restore_model(checkpoint).parameters()[0].dtype == np.float64


def test_other_format_versions_are_rejected(tmp_path):
    path = tmp_path / "future.npz"
    np.savez(path, format_version=np.array(2), config=np.array(CONFIG.to_text()), step=np.array(0), param_names=np.array([]))

    with pytest.raises(CheckpointError, match="version 2"):
        load_checkpoint(path)


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.npz")

    (tmp_path / "broken.npz").write_bytes(b"not a zip archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "broken.npz")

    partial = tmp_path / "partial.npz"
    np.savez(partial, format_version=np.array(1), config=np.array(CONFIG.to_text()), step=np.array(0), param_names=np.array(["x"]))
    with pytest.raises(CheckpointError):
        load_checkpoint(partial)


def test_state_dict_mismatch(rng):
    model = STDANet(CONFIG.network, rng)
    state = model.state_dict()

    with pytest.raises(CheckpointError, match="missing"):
        model.load_state_dict({k: v for k, v in state.items() if k != "decoder.final.bias"})
    state["decoder.final.bias"] = np.zeros(5)
    with pytest.raises(CheckpointError, match="decoder.final.bias"):
        model.load_state_dict(state)


def test_single_checkpoint_as_a_shared_stack(tmp_path):
    model = build_model(CONFIG.network)
    checkpoint = load_checkpoint(save_checkpoint(tmp_path / "ckpt.npz", model, CONFIG))

    stack = restore_model(checkpoint, stack=True)

    assert isinstance(stack, STDANetStack)
    assert stack.stage1 is stack.stage2
    np.testing.assert_array_equal(stack.stage1.decoder.final.weight.data, model.decoder.final.weight.data)


def test_stack_checkpoints_restore_as_stacks(tmp_path):
    config = CONFIG.replace(stack=True, share_stage_weights=False)
    model = build_model(config.network, stack_mode=True)

    stack = restore_model(load_checkpoint(save_checkpoint(tmp_path / "stack.npz", model, config)))

    assert isinstance(stack, STDANetStack)
    assert stack.stage1 is not stack.stage2
    np.testing.assert_array_equal(stack.stage2.encoder.blocks[0].conv.weight.data, model.stage2.encoder.blocks[0].conv.weight.data)
