import dataclasses
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from stdanet.config import LossConfig, NetworkConfig, OptimizerConfig
from stdanet.exceptions import ConfigError, ShapeMismatchError
from stdanet.gradcheck import check_directional, perturb_zero_parameters
from stdanet.losses import downsample_sharp, mse_loss, total_loss, warp_loss
from stdanet.network import STDANet, STDANetOutput, STDANetStack, build_model
from stdanet.sampling import FlowSet
from stdanet.synth import SceneSpec, ShapeSpec, render_sequence
from stdanet.tensor import Tensor, no_grad
from stdanet.train import Adam


def frames(rng, count=3, size=16):
    return rng.uniform(0.0, 1.0, size=(count, 3, size, size))


def test_forward_shapes(rng, tiny_config):
    model = STDANet(tiny_config, rng)

    out = model(frames(rng))

    assert out.restored.shape == (3, 16, 16)
    assert out.flows.spatial == (4, 4)
    assert out.stda.fused.shape == (8, 4, 4)
    assert out.restored.dtype == np.float32


def test_encoder_works_at_quarter_resolution(rng, tiny_config):
    features = STDANet(tiny_config, rng).encode(frames(rng, size=12))

    assert [f.shape for f in features] == [(8, 3, 3)] * 3


@pytest.mark.parametrize("shape", [(3, 3, 14, 16), (2, 3, 16, 16), (3, 1, 16, 16)])
def test_invalid_windows_are_rejected(rng, tiny_config, shape):
    with pytest.raises(ShapeMismatchError):
        STDANet(tiny_config, rng)(rng.uniform(size=shape))


def test_motion_estimator_starts_at_zero_flow(rng, tiny_config):
    out = STDANet(tiny_config, rng)(frames(rng))

    for flow in out.flows.pairs().values():
        np.testing.assert_array_equal(flow.data, 0.0)


def test_without_flow_estimator_flows_are_zero(rng):
    model = STDANet(NetworkConfig(channels=8, heads=2, points=2, residual_blocks=1, use_flow=False), rng)

    out = model(frames(rng))

    assert model.motion is None
    assert all(not np.any(f.data) for f in out.flows.pairs().values())


def test_decoder_adds_the_blurry_mid_frame(rng, tiny_config):
    model = STDANet(tiny_config, rng)
    model.decoder.final.weight.data[...] = 0.0
    window = frames(rng).astype(np.float32)

    out = model(window)

    np.testing.assert_array_equal(out.restored.data, window[1])


def test_restore_clamps_and_records_nothing(rng, tiny_config):
    model = STDANet(tiny_config, rng)
    model.decoder.final.bias.data[...] = 5.0

    restored = model.restore(frames(rng))

    assert isinstance(restored, np.ndarray)
    np.testing.assert_array_equal(restored, 1.0)


def test_restore_accepts_a_list_of_frames(rng, tiny_config):
    model = STDANet(tiny_config, rng)
    window = frames(rng)

    np.testing.assert_array_equal(model.restore(list(window)), model.restore(window))


def test_same_seed_builds_identical_models(tiny_config):
    first, second = build_model(tiny_config, seed=3), build_model(tiny_config, seed=3)

    for (name, a), (_, b) in zip(first.named_parameters(), second.named_parameters()):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)


def test_parameter_names_follow_the_module_tree(tiny_config):
    names = [name for name, _ in build_model(tiny_config).named_parameters()]

    assert "encoder.blocks.0.conv.weight" in names
    assert "motion.convs.3.bias" in names
    assert "stda.mma.offset_head.weight" in names
    assert "stda.msa.fusion_conv.weight" in names
    assert "decoder.up.1.deconv.weight" in names
    assert len(names) == len(set(names))


def test_invalid_network_configs_are_rejected():
    with pytest.raises(ConfigError):
        STDANet(NetworkConfig(channels=6, heads=4))


def test_stack_wiring(rng, tiny_config):
    config = dataclasses.replace(tiny_config, share_stage_weights=False)
    stack = STDANetStack(config, rng)
    window = frames(rng, count=5)
    zero_flows = FlowSet.zeros(4, 4)

    def stage1(triplet):
        return STDANetOutput(triplet[1], zero_flows, None)

    with patch.object(stack.stage1, "forward", side_effect=stage1) as first, patch.object(
        stack.stage2, "forward", return_value=STDANetOutput(Tensor(window[2]), zero_flows, None)
    ) as second:
        out = stack(window)

    assert first.call_count == 3
    for call, start in zip(first.call_args_list, range(3)):
        np.testing.assert_array_equal(call.args[0].data, window[start : start + 3].astype(np.float32))
    second.assert_called_once()
    np.testing.assert_array_equal(second.call_args.args[0].data, window[1:4].astype(np.float32))
    assert len(out.intermediates) == 3
    assert len(out.stages) == 4


def test_stack_shares_weights_by_default(rng, tiny_config):
    stack = STDANetStack(tiny_config, rng)

    assert stack.stage1 is stack.stage2
    assert stack.num_parameters() == STDANet(tiny_config, rng).num_parameters()
    assert stack.restore(frames(rng, count=5)).shape == (3, 16, 16)


def test_stack_needs_five_frames(rng, tiny_config):
    with pytest.raises(ShapeMismatchError):
        STDANetStack(tiny_config, rng)(frames(rng, count=3))


def test_build_model_logs_parameter_count(tiny_config):
    with patch("stdanet.network.logger") as logger:
        model = build_model(tiny_config, stack_mode=True)

    assert isinstance(model, STDANetStack)
    logger.info.assert_called_once()
    assert logger.info.call_args.args[2] == model.num_parameters()


def test_micro_network_gradients(micro_config):
    """Whole-network directional check at 64-bit: restoration plus warp loss."""
    rng = np.random.default_rng(7)
    model = STDANet(micro_config, rng)
    perturb_zero_parameters(model.parameters(), rng, scale=0.05)
    window = Tensor(frames(rng), requires_grad=True)
    sharp = frames(rng)
    down = downsample_sharp(list(sharp))
    params = model.parameters() + [window]

    def loss():
        out = model(window)
        return total_loss(mse_loss(out.restored, sharp[1]), warp_loss(down, out.flows), LossConfig(gamma=0.05))

    report = check_directional(loss, params, directions=3, rng=rng)

    assert report.passed, report.errors


def test_forward_runs_the_stda_module_once(rng, micro_config):
    model = STDANet(micro_config, rng)
    with patch.object(model.stda, "forward", MagicMock(wraps=model.stda.forward)) as stda_forward:
        out = model(frames(rng))

    stda_forward.assert_called_once()
    assert np.all(np.isfinite(out.restored.data))


def test_motion_estimator_learns_a_translating_square(tiny_config):
    # Textured square moving 4 px per frame: +1 px at quarter resolution.
    scene = SceneSpec(
        height=32,
        width=32,
        frames=3,
        factor=1,
        shapes=(
            ShapeSpec(
                kind="rect",
                x=8.0,
                y=10.0,
                size=(12.0, 12.0),
                velocity=(4.0, 0.0),
                color=(0.9, 0.6, 0.3),
                texture=0.5,
                period=16.0,
            ),
        ),
    )
    sharp = render_sequence(scene).sharp
    down = downsample_sharp(list(sharp))
    model = STDANet(tiny_config, seed=0)
    params = model.encoder.parameters() + model.motion.parameters()
    optimizer = Adam(params, OptimizerConfig(lr=1e-3))

    losses = []
    for _ in range(300):
        optimizer.zero_grad()
        loss = warp_loss(down, model.estimate_motion(model.encode(sharp)))
        loss.backward()
        optimizer.step()
        losses.append(loss.item())

    with no_grad():
        flow = model.estimate_motion(model.encode(sharp)).mid_to_next.data
    # Quarter-resolution pixels whose centres lie inside the mid-frame square (x 12..24, y 10..22).
    region = flow[:, 3:6, 3:6]
    endpoint_error = np.sqrt((region[0] - 1.0) ** 2 + region[1] ** 2).mean()
    assert losses[-1] < 0.1 * losses[0]
    # Zero flow scores exactly 1.0 here.
    assert endpoint_error <= 0.5
