import numpy as np
import pytest

from stdanet.exceptions import ImageFormatError, ShapeMismatchError
from stdanet.imageio import frame_name, list_frames, load_frames, load_image, quantize, save_grayscale, save_image


def test_round_trip_within_one_quantisation_step(tmp_path, rng):
    image = rng.uniform(size=(3, 9, 7))

    loaded = load_image(save_image(tmp_path / "frame.png", image))

    assert loaded.shape == (3, 9, 7)
    assert loaded.dtype == np.float32
    assert np.abs(loaded - image).max() <= 0.5 / 255 + 1e-6
    np.testing.assert_array_equal(loaded, quantize(image))


def test_black_and_white_are_exact(tmp_path):
    image = np.zeros((3, 4, 4))
    image[:, :2] = 1.0

    np.testing.assert_array_equal(load_image(save_image(tmp_path / "bw.png", image)), image)


def test_values_are_clipped(tmp_path):
    loaded = load_image(save_image(tmp_path / "clip.png", np.full((3, 2, 2), 1.7)))

    np.testing.assert_array_equal(loaded, 1.0)


def test_grayscale_images_load_as_rgb(tmp_path):
    save_grayscale(tmp_path / "gray.png", np.full((5, 6), 0.2))

    loaded = load_image(tmp_path / "gray.png")

    assert loaded.shape == (3, 5, 6)
    np.testing.assert_allclose(loaded, 51 / 255)


@pytest.mark.parametrize("shape", [(4, 4), (1, 4, 4), (4, 4, 3)])
def test_save_image_wants_channels_first_rgb(tmp_path, shape):
    with pytest.raises(ShapeMismatchError):
        save_image(tmp_path / "x.png", np.zeros(shape))


def test_frames_are_listed_in_index_order(tmp_path):
    for index in (10, 2, 1):
        save_image(tmp_path / frame_name(index), np.full((3, 2, 2), index / 10))
    (tmp_path / "notes.txt").write_text("not a frame")

    paths = list_frames(tmp_path)
    frames = load_frames(tmp_path)

    assert [p.name for p in paths] == ["00001.png", "00002.png", "00010.png"]
    assert frames.shape == (3, 3, 2, 2)
    np.testing.assert_allclose(frames[:, 0, 0, 0], [0.1, 0.2, 1.0], atol=1 / 255)


def test_empty_directory_has_no_frames(tmp_path):
    assert load_frames(tmp_path).shape == (0, 3, 0, 0)


def test_missing_files_and_directories(tmp_path):
    with pytest.raises(ImageFormatError):
        load_image(tmp_path / "missing.png")
    with pytest.raises(ImageFormatError):
        list_frames(tmp_path / "missing")


def test_undecodable_file(tmp_path):
    path = tmp_path / "00000.png"
    path.write_bytes(b"definitely not a png")

    with pytest.raises(ImageFormatError):
        load_image(path)


def test_frames_of_different_sizes(tmp_path):
    save_image(tmp_path / frame_name(0), np.zeros((3, 2, 2)))
    save_image(tmp_path / frame_name(1), np.zeros((3, 2, 3)))

    with pytest.raises(ShapeMismatchError):
        load_frames(tmp_path)
