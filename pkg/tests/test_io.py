import numpy as np
import pytest

from agu.errors import InvalidInputError
from agu.io import false_color, list_images, read_image, to_uint8, write_image


@pytest.mark.parametrize("suffix,channels", [(".png", 3), (".png", None), (".ppm", 3), (".pgm", None)])
def test_round_trip(tmp_path, rng, suffix, channels):
    shape = (7, 9) if channels is None else (7, 9, channels)
    img = rng.integers(0, 256, shape).astype(np.float64)
    path = tmp_path / f"x{suffix}"
    write_image(path, img)
    np.testing.assert_array_equal(read_image(path), img)


def test_half_up_rounding_and_clamp():
    np.testing.assert_array_equal(to_uint8([0.49, 0.5, 1.5, 254.5, -3.0, 300.0]), [0, 1, 2, 255, 0, 255])


def test_gray_written_to_ppm_reads_back_as_rgb(tmp_path):
    write_image(tmp_path / "g.ppm", np.full((4, 4), 9.0))
    assert read_image(tmp_path / "g.ppm").shape == (4, 4, 3)


def test_rejections(tmp_path):
    with pytest.raises(InvalidInputError):
        write_image(tmp_path / "x.jpg", np.zeros((4, 4)))
    with pytest.raises(InvalidInputError):
        write_image(tmp_path / "x.pgm", np.zeros((4, 4, 3)))
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(InvalidInputError):
        read_image(bad)


def test_list_images_filters_and_sorts(tmp_path):
    for name in ("b.png", "a.PGM", "notes.txt"):
        (tmp_path / name).write_bytes(b"")
    assert [p.name for p in list_images(tmp_path)] == ["a.PGM", "b.png"]


def test_false_color_extremes():
    rgb = false_color(np.array([[0, 60, 120]]), 121)
    assert rgb[0, 0, 2] == 255 and rgb[0, 0, 0] == 0
    assert rgb[0, 2, 0] == 255 and rgb[0, 2, 2] == 0
    assert rgb[0, 1, 0] == rgb[0, 1, 2] == 0
