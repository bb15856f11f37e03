"""Bytecode -> RGB pixel -> fixed-size image translation, and its inverses.

Every 3 consecutive bytes become one (R, G, B) pixel, e.g. bytes
60 60 60 -> (96, 96, 96). Pixels are laid out row-major into a square (or
fixed-width) image, padded with the configured pad byte, then resized to the
network input size. All operations are pure and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image

from .errors import InconsistentLengthError, UnsupportedPngVariantError


@dataclass(frozen=True)
class EncodingConfig:
    pad_byte: int = 0x00
    layout: str = "square"  # "square" or "fixed_width"
    fixed_width: Optional[int] = None
    target_size: tuple[int, int] = (224, 224)  # (H, W)
    resize_filter: str = "nearest"  # "nearest" or "bilinear"

    def __post_init__(self):
        if not 0 <= self.pad_byte <= 255:
            raise ValueError("pad_byte must be a byte value")
        if self.layout not in ("square", "fixed_width"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.layout == "fixed_width" and (self.fixed_width or 0) < 1:
            raise ValueError("fixed_width layout needs fixed_width >= 1")
        if min(self.target_size) < 1:
            raise ValueError("target dimensions must be positive")
        if self.resize_filter not in ("nearest", "bilinear"):
            raise ValueError(f"unknown resize filter {self.resize_filter!r}")

    def to_json_dict(self) -> dict:
        return {
            "pad_byte": self.pad_byte,
            "layout": self.layout,
            "fixed_width": self.fixed_width,
            "target_size": list(self.target_size),
            "resize_filter": self.resize_filter,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EncodingConfig":
        return cls(
            pad_byte=d["pad_byte"],
            layout=d["layout"],
            fixed_width=d.get("fixed_width"),
            target_size=tuple(d["target_size"]),
            resize_filter=d["resize_filter"],
        )

    def hash(self) -> str:
        canon = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class PixelSequence:
    pixels: np.ndarray  # (n, 3) uint8
    source_len: int

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.shape[1] != 3:
            raise ValueError("pixels must have shape (n, 3)")
        if self.source_len < 1:
            raise ValueError("source_len must be >= 1")


@dataclass(frozen=True)
class ColorImage:
    data: np.ndarray  # (H, W, 3) uint8

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("image data must have shape (H, W, 3)")
        if self.data.dtype != np.uint8:
            raise ValueError("image data must be uint8")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def bytes_to_pixels(code: bytes, cfg: EncodingConfig = EncodingConfig()) -> PixelSequence:
    """Group consecutive byte triples into RGB pixels, padding the tail."""
    if not code:
        raise ValueError("bytecode must be non-empty")
    n = len(code)
    pad = (-n) % 3
    buf = np.frombuffer(code + bytes([cfg.pad_byte]) * pad, dtype=np.uint8)
    return PixelSequence(buf.reshape(-1, 3).copy(), source_len=n)


def pixels_to_bytes(seq: PixelSequence) -> bytes:
    """Inverse of bytes_to_pixels; drops the tail padding using source_len."""
    capacity = len(seq.pixels) * 3
    if not capacity - 2 <= seq.source_len <= capacity:
        raise InconsistentLengthError(
            f"source_len {seq.source_len} incompatible with {len(seq.pixels)} pixels"
        )
    return seq.pixels.tobytes()[: seq.source_len]


def pixels_to_image(seq: PixelSequence, cfg: EncodingConfig = EncodingConfig()) -> ColorImage:
    """Lay pixels out row-major; square side = ceil(sqrt(n)), tail padded."""
    n = len(seq.pixels)
    if cfg.layout == "square":
        side = math.isqrt(n)
        if side * side < n:
            side += 1
        height = width = side
    else:
        width = cfg.fixed_width
        height = -(-n // width)
    grid = np.full((height * width, 3), cfg.pad_byte, dtype=np.uint8)
    grid[:n] = seq.pixels
    return ColorImage(grid.reshape(height, width, 3))


def _nearest_indices(src_size: int, dst_size: int) -> np.ndarray:
    i = np.arange(dst_size)
    src = np.floor((i + 0.5) * src_size / dst_size).astype(np.int64)
    return np.minimum(src, src_size - 1)


def _bilinear_axis(src_size: int, dst_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # center-aligned sample positions, clamped to the valid range
    pos = (np.arange(dst_size) + 0.5) * src_size / dst_size - 0.5
    pos = np.clip(pos, 0.0, src_size - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src_size - 1)
    frac = pos - lo
    return lo, hi, frac


def resize(img: ColorImage, cfg: EncodingConfig = EncodingConfig()) -> ColorImage:
    """Resize to cfg.target_size with the configured filter."""
    th, tw = cfg.target_size
    sh, sw = img.height, img.width
    if cfg.resize_filter == "nearest":
        rows = _nearest_indices(sh, th)
        cols = _nearest_indices(sw, tw)
        out = img.data[rows][:, cols]
        return ColorImage(np.ascontiguousarray(out))
    # bilinear, round-half-up back to 8 bits
    r_lo, r_hi, r_f = _bilinear_axis(sh, th)
    c_lo, c_hi, c_f = _bilinear_axis(sw, tw)
    src = img.data.astype(np.float64)
    top = src[r_lo][:, c_lo] * (1 - c_f)[None, :, None] + src[r_lo][:, c_hi] * c_f[None, :, None]
    bot = src[r_hi][:, c_lo] * (1 - c_f)[None, :, None] + src[r_hi][:, c_hi] * c_f[None, :, None]
    blended = top * (1 - r_f)[:, None, None] + bot * r_f[:, None, None]
    out = np.floor(blended + 0.5).clip(0, 255).astype(np.uint8)
    return ColorImage(out)


def image_to_tensor(img: ColorImage) -> np.ndarray:
    """Channel-first float64 tensor of shape (3, H, W), intensities in [0, 1]."""
    return np.ascontiguousarray(img.data.transpose(2, 0, 1)).astype(np.float64) / 255.0


def encode_bytecode(code: bytes, cfg: EncodingConfig = EncodingConfig()) -> np.ndarray:
    """Full pipeline: bytes -> pixels -> image -> resized image -> tensor."""
    img = resize(pixels_to_image(bytes_to_pixels(code, cfg), cfg), cfg)
    return image_to_tensor(img)


def image_to_png(img: ColorImage, path: str | os.PathLike) -> None:
    Image.fromarray(img.data, mode="RGB").save(path, format="PNG")


def png_to_image(path: str | os.PathLike) -> ColorImage:
    with Image.open(path) as im:
        if im.format != "PNG":
            raise UnsupportedPngVariantError(f"not a PNG file: {im.format}")
        if im.mode != "RGB":
            raise UnsupportedPngVariantError(f"unsupported PNG mode {im.mode!r}")
        return ColorImage(np.asarray(im, dtype=np.uint8).copy())
