import numpy as np
import pytest

from relit.imageio import read_float, read_ppm, to_srgb8, write_float, write_ppm


def test_srgb_encoding():
    np.testing.assert_array_equal(to_srgb8([[[0.0, 1.0, 2.0]]]), [[[0, 255, 255]]])
    assert to_srgb8([[[0.5, 0.5, 0.5]]])[0, 0, 0] == round(0.5 ** (1 / 2.2) * 255)


def test_ppm_roundtrip(tmp_path, rng):
    img = rng.random((7, 5, 3))
    # first pixel bytes are whitespace values to exercise header parsing
    img[0, 0] = (10 / 255) ** 2.2
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), to_srgb8(img))


def test_float_roundtrip(tmp_path, rng):
    img = rng.normal(size=(4, 6, 5)).astype(np.float32)
    write_float(tmp_path / "f.bin", img)
    back = read_float(tmp_path / "f.bin")
    assert back.tobytes() == img.tobytes()
    depth = rng.random((4, 6))
    write_float(tmp_path / "d.bin", depth)
    assert read_float(tmp_path / "d.bin").shape == (4, 6, 1)


def test_float_rejects_bad_data(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ValueError):
        read_float(tmp_path / "x.bin")
