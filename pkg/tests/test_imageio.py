import numpy as np
import pytest

from rspose.imageio import ImageFormatError, read_pfm, read_pgm, read_ppm, write_pfm, write_pgm, write_ppm


def test_pgm_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (7, 11)).astype(np.uint8)
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n11 7\n255\n")


def test_pgm_with_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n3 2\n# depth\n255\n" + bytes(range(6)))
    assert read_pgm(p).tolist() == [[0, 1, 2], [3, 4, 5]]


def test_pgm_float_input_is_rounded_and_clipped(tmp_path):
    write_pgm(tmp_path / "f.pgm", np.array([[-3.0, 12.6, 300.0]]))
    assert read_pgm(tmp_path / "f.pgm").tolist() == [[0, 13, 255]]


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(1).integers(0, 256, (4, 5, 3)).astype(np.uint8)
    write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)


def test_wrong_magic(tmp_path):
    write_ppm(tmp_path / "a.ppm", np.zeros((2, 2, 3), np.uint8))
    with pytest.raises(ImageFormatError, match="P5"):
        read_pgm(tmp_path / "a.ppm")


def test_truncated_raster(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
    with pytest.raises(ImageFormatError, match="raster"):
        read_pgm(p)


def test_sixteen_bit_rejected(tmp_path):
    p = tmp_path / "s.pgm"
    p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(ImageFormatError, match="8-bit"):
        read_pgm(p)


def test_pfm_round_trip(tmp_path):
    arr = np.random.default_rng(2).standard_normal((5, 6)).astype(np.float32)
    arr[0, 0] = -1.0
    write_pfm(tmp_path / "a.pfm", arr)
    assert np.array_equal(read_pfm(tmp_path / "a.pfm"), arr)


def test_pfm_layout_is_little_endian_bottom_to_top(tmp_path):
    arr = np.array([[1.0, 2.0], [3.0, 4.0]], np.float32)
    write_pfm(tmp_path / "l.pfm", arr)
    data = (tmp_path / "l.pfm").read_bytes()
    header = b"Pf\n2 2\n-1.0\n"
    assert data.startswith(header)
    assert np.frombuffer(data[len(header):], "<f4").tolist() == [3.0, 4.0, 1.0, 2.0]


def test_pfm_big_endian_read(tmp_path):
    p = tmp_path / "b.pfm"
    p.write_bytes(b"Pf\n2 1\n1.0\n" + np.array([5.0, 6.0], ">f4").tobytes())
    assert read_pfm(p).tolist() == [[5.0, 6.0]]


def test_pfm_rejects_color_writes(tmp_path):
    with pytest.raises(ImageFormatError):
        write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 3)))
