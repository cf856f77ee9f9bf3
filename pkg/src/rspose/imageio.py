"""Minimal PGM (P5), PPM (P6) and PFM readers/writers."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_HEADER_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


class ImageFormatError(ValueError):
    pass


def _read_tokens(data: bytes, count: int):
    pos = 0
    out = []
    for _ in range(count):
        m = _HEADER_TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated header")
        out.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    return out, pos + 1


def _read_netpbm(path, magic: bytes, channels: int) -> np.ndarray:
    data = Path(path).read_bytes()
    (m, w, h, maxval), start = _read_tokens(data, 4)
    if m != magic:
        raise ImageFormatError(f"{path}: expected {magic.decode()} header, found {m.decode(errors='replace')}")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit images are supported (maxval {maxval})")
    n = w * h * channels
    raster = data[start : start + n]
    if len(raster) != n:
        raise ImageFormatError(f"{path}: raster has {len(raster)} bytes, expected {n}")
    arr = np.frombuffer(raster, dtype=np.uint8)
    return arr.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)


def read_ppm(path) -> np.ndarray:
    return _read_netpbm(path, b"P6", 3)


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ImageFormatError("PGM needs a 2-D array")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + _to_u8(img).tobytes())


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError("PPM needs an (h, w, 3) array")
    h, w, _ = img.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + _to_u8(img).tobytes())


def _to_u8(img):
    if img.dtype == np.uint8:
        return np.ascontiguousarray(img)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_pfm(path, img: np.ndarray) -> None:
    """Grayscale little-endian PFM (scale -1.0); rows stored bottom to top."""
    img = np.asarray(img, dtype="<f4")
    if img.ndim != 2:
        raise ImageFormatError("PFM writer handles single-channel maps only")
    h, w = img.shape
    Path(path).write_bytes(b"Pf\n%d %d\n-1.0\n" % (w, h) + np.ascontiguousarray(img[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (m, w, h, scale), start = _read_tokens(data, 4)
    if m not in (b"Pf", b"PF"):
        raise ImageFormatError(f"{path}: not a PFM file")
    channels = 1 if m == b"Pf" else 3
    w, h, scale = int(w), int(h), float(scale)
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h * channels
    arr = np.frombuffer(data, dtype=dtype, count=n, offset=start)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return arr.reshape(shape)[::-1].astype(np.float32)
