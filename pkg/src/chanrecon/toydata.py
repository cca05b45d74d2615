"""Self-contained toy dataset: procedurally rendered "real" images and
diffusion-sampled "fake" images, written into the standard dataset layout.

Real images are flat-background scenes with 1-3 solid shapes and a fine
Gaussian texture. Colors follow a fixed palette in which the green value is
a noisy linear function of red and blue, so channel restoration from the
other two planes is learnable; the per-pixel texture is not, which is what
separates real images from the smooth model samples downstream.
"""

from __future__ import annotations

import os

import numpy as np

from .diffusion import DenoiserCheckpoint, derive_seed, sample_images
from .image import RGBImage, save_image
from .manifest import REAL_CLASS, SPLITS
from .schedule import VarianceSchedule

TEXTURE_SIGMA = 0.05


def _palette_color(rng: np.random.Generator) -> np.ndarray:
    r = rng.uniform(0.08, 0.92)
    b = rng.uniform(0.08, 0.92)
    g = 0.15 + 0.7 * (0.6 * r + 0.4 * b) + rng.normal(0.0, 0.03)
    return np.clip(np.array([r, g, b]), 0.0, 1.0)


def render_real_image(seed: int, resolution: int) -> RGBImage:
    """One procedural scene: background + shapes + additive texture noise."""
    rng = np.random.default_rng(seed)
    img = np.ones((resolution, resolution, 3)) * _palette_color(rng)
    yy, xx = np.mgrid[0:resolution, 0:resolution]
    for _ in range(rng.integers(1, 4)):
        color = _palette_color(rng)
        cx, cy = rng.uniform(0.15, 0.85, 2) * resolution
        size = rng.uniform(0.12, 0.35) * resolution
        if rng.random() < 0.5:
            mask = (np.abs(xx - cx) < size) & (np.abs(yy - cy) < size)
        else:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < size ** 2
        img[mask] = color
    img += rng.normal(0.0, TEXTURE_SIGMA, img.shape)
    return RGBImage(np.clip(img, 0.0, 1.0))


def split_counts(total: int, fractions) -> dict[str, int]:
    """Deterministic train/val/test counts; remainder goes to train."""
    counts = {split: int(total * frac) for split, frac in zip(SPLITS, fractions)}
    counts["train"] += total - sum(counts.values())
    return counts


def generate_real_images(root, n: int, resolution: int, seed: int, fractions) -> list[str]:
    """Render n real images into `<root>/<split>/real/`; returns written paths."""
    written = []
    counts = split_counts(n, fractions)
    index = 0
    for split in SPLITS:
        split_dir = os.path.join(os.fspath(root), split, REAL_CLASS)
        os.makedirs(split_dir, exist_ok=True)
        for _ in range(counts[split]):
            img = render_real_image(derive_seed(seed, "real", index), resolution)
            path = os.path.join(split_dir, f"real_{index:05d}.png")
            save_image(img, path)
            written.append(path)
            index += 1
    return written


def generate_fake_images(root, ckpt: DenoiserCheckpoint, sched: VarianceSchedule,
                         n: int, resolution: int, seed: int, fractions,
                         generator_tag: str, batch_size: int = 64) -> list[str]:
    """Sample n images from the trained model into `<root>/<split>/<tag>/`."""
    written = []
    counts = split_counts(n, fractions)
    index = 0
    for split in SPLITS:
        split_dir = os.path.join(os.fspath(root), split, generator_tag)
        os.makedirs(split_dir, exist_ok=True)
        remaining = counts[split]
        while remaining > 0:
            batch = min(batch_size, remaining)
            images = sample_images(ckpt, sched, batch, resolution,
                                   derive_seed(seed, "fake", split, index))
            for img in images:
                path = os.path.join(split_dir, f"fake_{index:05d}.png")
                save_image(img, path)
                written.append(path)
                index += 1
            remaining -= batch
    return written
