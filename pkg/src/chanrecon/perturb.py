"""Image perturbations for the robustness harness.

All three operate on raw images (before feature extraction): baseline JPEG
re-encoding, Gaussian blur with an explicit normalized kernel, and additive
Gaussian noise in the [0, 1] domain.
"""

from __future__ import annotations

import io
import math

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ArgumentError
from .image import RGBImage

JPEG_CODEC_ID = "pillow-baseline-jpeg-4:2:0"


def jpeg_compress(img: RGBImage, quality: int) -> RGBImage:
    """Encode to baseline JPEG (4:2:0 chroma subsampling), decode back."""
    if not isinstance(quality, (int, np.integer)) or not 1 <= quality <= 100:
        raise ArgumentError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    u8 = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="JPEG", quality=int(quality), subsampling=2)
    with Image.open(io.BytesIO(buf.getvalue())) as decoded:
        arr = np.asarray(decoded.convert("RGB"), dtype=np.float32) / 255.0
    return RGBImage(arr)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized Gaussian weights with radius ceil(3*sigma); sigma 0 -> [1]."""
    if sigma < 0:
        raise ArgumentError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return np.array([1.0])
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


def gaussian_blur(img: RGBImage, sigma: float) -> RGBImage:
    """Per-channel separable convolution with reflect padding; sigma 0 is identity."""
    if sigma < 0:
        raise ArgumentError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return RGBImage(img.data.copy())
    kernel = gaussian_kernel1d(sigma)
    out = img.data.astype(np.float64)
    out = ndimage.convolve1d(out, kernel, axis=0, mode="reflect")
    out = ndimage.convolve1d(out, kernel, axis=1, mode="reflect")
    return RGBImage(np.clip(out, 0.0, 1.0))


def gaussian_noise(img: RGBImage, sigma: float, seed: int) -> RGBImage:
    """Add i.i.d. N(0, sigma^2) per pixel, clamp to [0, 1]; seeded."""
    if sigma < 0:
        raise ArgumentError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return RGBImage(img.data.copy())
    rng = np.random.default_rng(seed)
    noisy = img.data.astype(np.float64) + rng.normal(0.0, sigma, img.data.shape)
    return RGBImage(np.clip(noisy, 0.0, 1.0))
