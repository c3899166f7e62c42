"""
Fundus preprocessing chain: resize -> greyscale -> normalize -> random flips ->
random rotation, each step a pure function on an Image.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator
from scipy.ndimage import map_coordinates

from settings import DEFAULT_SEED

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True, eq=False)
class Image:
    """H x W x C pixels. Plain images live in [0, 1]; standardized ones may not."""

    pixels: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3) or 0 in pixels.shape[:2]:
            raise ValueError(f"image must be H x W x 1 or H x W x 3, got shape {pixels.shape}")
        if not np.isfinite(pixels).all():
            raise ValueError("image has non-finite pixels")
        if not self.standardized and ((pixels < 0.0) | (pixels > 1.0)).any():
            raise ValueError("pixel values must be within [0, 1]")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.standardized == other.standardized and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


class AugmentConfig(BaseModel):
    target_width: int = Field(224, ge=1)
    target_height: int = Field(224, ge=1)
    hflip_prob: float = Field(0.5, ge=0.0, le=1.0)
    vflip_prob: float = Field(0.5, ge=0.0, le=1.0)
    max_rotation: float = Field(45.0, ge=0.0, le=180.0)
    greyscale: bool = True
    mean: list[float] = [0.5]
    std: list[float] = [0.5]
    fill: float = Field(0.0, ge=0.0, le=1.0)
    seed: int = DEFAULT_SEED

    @field_validator("std")
    @classmethod
    def _positive_std(cls, value):
        if any(s <= 0 for s in value):
            raise ValueError("std must be positive")
        return value


def _image(pixels: np.ndarray, standardized: bool) -> Image:
    # interpolation may overshoot [0, 1] by an ulp
    return Image(pixels if standardized else np.clip(pixels, 0.0, 1.0), standardized)


def _lerp(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    # a + t*(b - a) returns a exactly when a == b, so constants survive
    return a + t * (b - a)


def _source_coords(n_out: int, n_in: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: Image, width: int, height: int) -> Image:
    """Bilinear resize with half-pixel-centred sampling and edge clamping."""
    if width < 1 or height < 1:
        raise ValueError(f"target size must be positive, got {width}x{height}")
    px = img.pixels
    y0, y1, ty = _source_coords(height, img.height)
    x0, x1, tx = _source_coords(width, img.width)
    rows = _lerp(px[y0], px[y1], ty[:, None, None])
    out = _lerp(rows[:, x0], rows[:, x1], tx[None, :, None])
    return _image(out, img.standardized)


def greyscale(img: Image) -> Image:
    if img.channels != 3:
        raise ValueError("greyscale needs a 3-channel image")
    return _image(img.pixels @ LUMA_WEIGHTS, img.standardized)


def _per_channel(values, channels: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if arr.size == 1:
        arr = np.repeat(arr, channels)
    if arr.size != channels:
        raise ValueError(f"{name} needs 1 or {channels} values, got {arr.size}")
    return arr


def normalize(img: Image, mean=0.5, std=0.5) -> Image:
    mean = _per_channel(mean, img.channels, "mean")
    std = _per_channel(std, img.channels, "std")
    if (std <= 0).any():
        raise ValueError("std must be positive")
    return Image((img.pixels - mean) / std, standardized=True)


def denormalize(img: Image, mean=0.5, std=0.5) -> Image:
    mean = _per_channel(mean, img.channels, "mean")
    std = _per_channel(std, img.channels, "std")
    return Image(img.pixels * std + mean, standardized=True)


def flip_h(img: Image) -> Image:
    return Image(img.pixels[:, ::-1], img.standardized)


def flip_v(img: Image) -> Image:
    return Image(img.pixels[::-1], img.standardized)


def rotate(img: Image, degrees: float, fill: float = 0.0) -> Image:
    """Rotate about the image centre, bilinear; pixels mapped from outside take `fill`."""
    if not np.isfinite(degrees):
        raise ValueError("rotation angle must be finite")
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    cy, cx = (img.height - 1) / 2.0, (img.width - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(img.height) - cy, np.arange(img.width) - cx, indexing="ij")
    # inverse mapping: each output pixel looks up its pre-image
    src_y = cy + cos * yy - sin * xx
    src_x = cx + sin * yy + cos * xx
    channels = [
        map_coordinates(img.pixels[:, :, c], [src_y, src_x], order=1, mode="constant", cval=fill)
        for c in range(img.channels)
    ]
    return _image(np.stack(channels, axis=-1), img.standardized)


def apply_pipeline(img: Image, config: AugmentConfig, rng: np.random.Generator) -> Image:
    out = resize_bilinear(img, config.target_width, config.target_height)
    if config.greyscale and out.channels == 3:
        out = greyscale(out)
    out = normalize(out, config.mean, config.std)

    # always draw all three so the stream does not depend on outcomes
    u_h, u_v = rng.random(2)
    angle = rng.uniform(-config.max_rotation, config.max_rotation)
    if u_h < config.hflip_prob:
        out = flip_h(out)
    if u_v < config.vflip_prob:
        out = flip_v(out)
    if angle != 0.0:
        fill = (config.fill - _per_channel(config.mean, out.channels, "mean")) / _per_channel(
            config.std, out.channels, "std"
        )
        out = _rotate_with_fill(out, angle, fill)
    return out


def _rotate_with_fill(img: Image, degrees: float, fill: np.ndarray) -> Image:
    if np.all(fill == fill[0]):
        return rotate(img, degrees, float(fill[0]))
    channels = [
        rotate(Image(img.pixels[:, :, c], img.standardized), degrees, float(fill[c])).pixels
        for c in range(img.channels)
    ]
    return Image(np.concatenate(channels, axis=-1), img.standardized)


def image_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def augment_batch(images: Sequence[Image], config: AugmentConfig) -> list[Image]:
    """Each image gets its own generator derived from (config.seed, index)."""
    return [apply_pipeline(img, config, image_rng(config.seed, i)) for i, img in enumerate(images)]
