import numpy as np
import pytest

from stdanet.exceptions import BlurWindowError, ConfigError, CropError, ShapeMismatchError
from stdanet.metrics import psnr
from stdanet.synth import (
    AugmentPlan,
    FrameWindow,
    SceneSpec,
    ShapeSpec,
    apply_plan,
    augment,
    draw_augment_plan,
    make_window,
    random_scene,
    render_sequence,
    synthesize_blur,
)


def moving_square(velocity=(2.0, 0.0), frames=4, background=(0.0, 0.0, 0.0)):
    square = ShapeSpec(kind="rect", x=10.0, y=12.0, size=(8.0, 8.0), velocity=velocity)
    return SceneSpec(height=32, width=48, frames=frames, shapes=(square,), background=background)


def centroid(image):
    mass = image.sum(axis=0)
    ys, xs = np.indices(mass.shape)
    return (xs * mass).sum() / mass.sum(), (ys * mass).sum() / mass.sum()


def test_sequence_layout():
    rendered = render_sequence(moving_square(frames=4))

    assert rendered.subframes.shape == (3 * 8 + 1 + 8, 3, 32, 48)
    assert rendered.sharp.shape == (4, 3, 32, 48)
    assert rendered.subframes.dtype == np.float32


def test_square_moves_by_its_velocity_per_frame():
    sharp = render_sequence(moving_square(velocity=(2.0, 0.0))).sharp

    xs = [centroid(frame)[0] for frame in sharp]
    ys = [centroid(frame)[1] for frame in sharp]

    np.testing.assert_allclose(np.diff(xs), 2.0, atol=1e-3)
    np.testing.assert_allclose(np.diff(ys), 0.0, atol=1e-3)


def test_static_scene_blur_is_the_sharp_frame():
    spec = SceneSpec(
        height=16,
        width=16,
        frames=3,
        shapes=(ShapeSpec(kind="disc", x=8.0, y=8.0, radius=4.5, texture=0.3),),
        background_texture=0.2,
    )
    rendered = render_sequence(spec, seed=4)

    np.testing.assert_array_equal(synthesize_blur(rendered, 7), rendered.sharp)


def test_single_subframe_window_is_the_sharp_frame():
    rendered = render_sequence(moving_square())

    np.testing.assert_array_equal(synthesize_blur(rendered, 1), rendered.sharp)


def test_blur_is_the_mean_of_the_centred_subframes():
    rendered = render_sequence(moving_square(velocity=(8.0, 0.0)))

    blurry = synthesize_blur(rendered, 5)

    centre = rendered.pad + 2 * rendered.factor
    expected = rendered.subframes[centre - 2 : centre + 3].astype(np.float64).mean(axis=0)
    np.testing.assert_allclose(blurry[2], expected, atol=1e-7)
    assert psnr(blurry[2], rendered.sharp[2]) < 40


@pytest.mark.parametrize("window", [0, 4, 9])
def test_invalid_blur_windows(window):
    with pytest.raises(BlurWindowError):
        synthesize_blur(render_sequence(moving_square(frames=2)), window)


def test_rendering_is_deterministic():
    spec = random_scene(np.random.default_rng(5), height=16, width=16, frames=2)

    first, second = render_sequence(spec, seed=9), render_sequence(spec, seed=9)

    np.testing.assert_array_equal(first.subframes, second.subframes)


def test_scene_specs_round_trip_through_dicts():
    spec = random_scene(np.random.default_rng(1), height=16, width=16)

    assert SceneSpec.from_dict(spec.to_dict()) == spec


@pytest.mark.parametrize(
    "data",
    [
        {"shapes": [{"kind": "triangle"}]},
        {"shapes": [{"kind": "rect", "speed": 1}]},
        {"factor": 0},
        {"colour": [1, 1, 1]},
    ],
)
def test_invalid_scene_specs(data):
    with pytest.raises(ConfigError):
        SceneSpec.from_dict(data)


def window_of(rng, length=3, size=16):
    return make_window(rng.uniform(size=(length, 3, size, size)), rng.uniform(size=(length, 3, size, size)))


def test_windows_are_read_only(rng):
    window = window_of(rng)

    with pytest.raises(ValueError):
        window.blurry[0, 0, 0, 0] = 1.0
    assert window.mid == 1
    assert window.spatial == (16, 16)


@pytest.mark.parametrize("length", [2, 4])
def test_windows_need_three_or_five_frames(rng, length):
    with pytest.raises(ShapeMismatchError):
        window_of(rng, length)


def test_window_targets_must_match(rng):
    with pytest.raises(ShapeMismatchError):
        FrameWindow(rng.uniform(size=(3, 3, 8, 8)), rng.uniform(size=(3, 3, 8, 4)))


def test_augment_without_seed_or_crop_is_the_identity(rng):
    window = window_of(rng)

    out = augment(window)

    np.testing.assert_array_equal(out.blurry, window.blurry)
    np.testing.assert_array_equal(out.sharp, window.sharp)


def test_four_quarter_turns_and_double_flips_cancel(rng):
    window = window_of(rng)

    turned = window
    for _ in range(4):
        turned = apply_plan(turned, AugmentPlan(rotations=1))
    flipped = apply_plan(apply_plan(window, AugmentPlan(flip_h=True, flip_v=True)), AugmentPlan(flip_h=True, flip_v=True))

    np.testing.assert_array_equal(turned.blurry, window.blurry)
    np.testing.assert_array_equal(flipped.sharp, window.sharp)


def test_augment_applies_the_same_transform_to_every_frame(rng):
    window = window_of(rng, length=5)

    out = augment(window, seed=3)

    # Flips and rotations permute pixels, so the pairwise error is unchanged.
    assert psnr(out.blurry, out.sharp) == pytest.approx(psnr(window.blurry, window.sharp))
    assert out.blurry.shape == window.blurry.shape


def test_crop_is_shared_by_blurry_and_sharp(rng):
    frames = rng.uniform(size=(3, 3, 16, 16))
    window = make_window(frames, frames)

    out = augment(window, seed=1, crop=8)

    assert out.blurry.shape == (3, 3, 8, 8)
    np.testing.assert_array_equal(out.blurry, out.sharp)


@pytest.mark.parametrize("crop", [20, 6, 0])
def test_invalid_crops(rng, crop):
    with pytest.raises(CropError):
        draw_augment_plan(rng, 16, 16, crop=crop)
