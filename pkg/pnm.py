"""
Image files: binary PGM (P5) / PPM (P6) at 8 bits, and a raw float dump
(`w h c` ASCII header line, then little-endian float64 samples, row-major)
for standardized images whose values leave [0, 1].
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from augment import Image

logger = logging.getLogger(__name__)

RAW_DTYPE = np.dtype("<f8")


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Reads `count` whitespace-separated header tokens, skipping # comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError("truncated image header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the samples
    return tokens, pos + 1


def read_pnm(path: str | Path) -> Image:
    data = Path(path).read_bytes()
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ValueError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    width, height, max_value = (int(t) for t in tokens[1:])
    if not 0 < max_value < 256:
        raise ValueError(f"{path}: only 8-bit images are supported (maxval {max_value})")
    expected = width * height * channels
    if len(data) - offset < expected:
        raise ValueError(f"{path}: truncated pixel data")
    samples = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    pixels = samples.reshape(height, width, channels).astype(np.float64) / max_value
    return Image(pixels)


def write_pnm(img: Image, path: str | Path) -> Path:
    if img.standardized:
        raise ValueError("standardized images go to the raw float format")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    magic = b"P5" if img.channels == 1 else b"P6"
    samples = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    path.write_bytes(header + samples.tobytes())
    return path


def read_raw(path: str | Path) -> Image:
    data = Path(path).read_bytes()
    tokens, offset = _header_tokens(data, 3)
    width, height, channels = (int(t) for t in tokens)
    expected = width * height * channels
    if (len(data) - offset) != expected * RAW_DTYPE.itemsize:
        raise ValueError(f"{path}: raw payload size does not match header {width} {height} {channels}")
    pixels = np.frombuffer(data, dtype=RAW_DTYPE, offset=offset).reshape(height, width, channels)
    return Image(pixels.astype(np.float64), standardized=True)


def write_raw(img: Image, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"{img.width} {img.height} {img.channels}\n".encode("ascii")
    path.write_bytes(header + img.pixels.astype(RAW_DTYPE).tobytes())
    return path


def read_image(path: str | Path) -> Image:
    if Path(path).suffix.lower() == ".raw":
        return read_raw(path)
    return read_pnm(path)


def write_image(img: Image, path: str | Path) -> Path:
    if Path(path).suffix.lower() == ".raw":
        return write_raw(img, path)
    return write_pnm(img, path)
