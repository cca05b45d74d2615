"""RGB image carrier and the channel-removal operators.

Pixels live in [0, 1] as float32, channel order (R, G, B), shape H x W x 3.
8-bit I/O converts by /255 on load and round-half-up x255 on save. All
operations are pure: inputs are never modified.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ArgumentError, ChannelCountError, DecodeError, DimensionError


class Channel(enum.Enum):
    """Color channel selector; the plane index into the last axis."""

    R = 0
    G = 1
    B = 2

    @classmethod
    def parse(cls, name: str) -> "Channel":
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ArgumentError(f"unknown channel {name!r}; expected one of R, G, B")


@dataclass(frozen=True)
class RGBImage:
    """H x W x 3 float tensor with all values in [0, 1]."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DimensionError(f"expected H x W x 3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"degenerate image shape {arr.shape}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise DimensionError("pixel values must lie in [0, 1] and be finite")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def plane(self, channel: Channel) -> np.ndarray:
        return self.data[:, :, channel.value]


def load_image(path, target_size: tuple[int, int]) -> RGBImage:
    """Decode a PNG/JPEG file, resize to (H, W), scale to [0, 1].

    Only plain 3-channel inputs are accepted; grayscale, palette, and
    alpha-carrying files raise ChannelCountError rather than being converted
    silently. Resize is bilinear and skipped entirely when the file is
    already at the target size, so such loads are bit-exact v/255.
    """
    h, w = int(target_size[0]), int(target_size[1])
    if h < 1 or w < 1:
        raise ArgumentError(f"invalid target size {target_size}")
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode != "RGB":
                raise ChannelCountError(
                    f"{path}: expected a 3-channel RGB image, got mode {mode!r}"
                )
            if img.size != (w, h):
                img = img.resize((w, h), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc
    return RGBImage(np.clip(arr, 0.0, 1.0))


def save_image(img: RGBImage, path) -> None:
    """Write a lossless 8-bit PNG; values quantized round-half-up."""
    u8 = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path, format="PNG")


def remove_channel(img: RGBImage, channel: Channel) -> RGBImage:
    """Return a copy of `img` with the selected channel plane zeroed.

    The other two planes are bit-identical to the input; the input itself is
    untouched. Idempotent per channel and commutative across channels.
    """
    out = img.data.copy()
    out[:, :, channel.value] = 0.0
    return RGBImage(out)
