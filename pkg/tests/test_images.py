import numpy as np
import pytest

from hybridrt.images import (
    HdrImage,
    decode_pfm,
    decode_ppm,
    encode_pfm,
    encode_ppm,
    read_pfm,
    write_pfm,
)


def test_pfm_round_trip(rng, tmp_path):
    img = HdrImage(rng.uniform(0, 10, (7, 5, 3)).astype(np.float32).astype(np.float64))
    write_pfm(tmp_path / "x.pfm", img)
    back = read_pfm(tmp_path / "x.pfm")
    assert back.pixels.shape == (7, 5, 3)
    assert np.array_equal(back.pixels, img.pixels)


def test_pfm_header_layout():
    img = HdrImage(np.zeros((2, 3, 3)))
    data = encode_pfm(img)
    assert data.startswith(b"PF\n3 2\n-1.0\n")
    assert len(data) == len(b"PF\n3 2\n-1.0\n") + 2 * 3 * 3 * 4


def test_pfm_bottom_up_rows():
    px = np.zeros((2, 1, 3))
    px[0, 0] = [1.0, 2.0, 3.0]   # top row
    px[1, 0] = [4.0, 5.0, 6.0]   # bottom row
    raw = encode_pfm(HdrImage(px))
    body = raw.split(b"\n", 3)[3]
    first = np.frombuffer(body, dtype="<f4", count=3)
    assert np.allclose(first, [4.0, 5.0, 6.0])  # bottom row written first
    assert np.array_equal(decode_pfm(raw).pixels, px)


def test_ppm_quantization_values():
    px = np.array([[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5]]])
    raw = encode_ppm(HdrImage(px))
    codes = decode_ppm(raw)
    assert tuple(codes[0, 0]) == (0, 0, 0)
    assert tuple(codes[0, 1]) == (255, 255, 255)
    # sRGB encode of 0.5 is 0.735357, times 255 = 187.5 -> half-up 188
    assert tuple(codes[0, 2]) == (188, 188, 188)


def test_ppm_round_trip(rng):
    codes = rng.integers(0, 256, (4, 6, 3), dtype=np.uint8)
    from hybridrt.images import encode_ppm_raw
    assert np.array_equal(decode_ppm(encode_ppm_raw(codes)), codes)


def test_bad_files_rejected(tmp_path):
    with pytest.raises(ValueError):
        decode_pfm(b"P6\n1 1\n255\n000")
    with pytest.raises(ValueError):
        decode_ppm(b"PF\n1 1\n-1.0\n" + b"\0" * 12)
    with pytest.raises(OSError):
        read_pfm(tmp_path / "missing.pfm")


def test_hdr_image_shape_validation():
    with pytest.raises(ValueError):
        HdrImage(np.zeros((4, 4)))
