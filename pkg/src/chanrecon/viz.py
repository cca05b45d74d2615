"""Residual-grid image export.

Grid layout (documented convention): one row per sample with columns

    [ original | removed(first channel) | recon_c1 | error_c1 | recon_c2 | ... ]

so a single-channel grid is the classic original / removed / reconstruction /
error strip. Error panels are min-max scaled per panel for visibility; the
margin note at the bottom records that scaling.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw, PngImagePlugin

from .errors import CacheError
from .image import Channel, RGBImage
from .residual import ErrorMap

CELL_SCALE = 4
PAD = 3
MARGIN_NOTE = "error panels min-max scaled per panel"


def _panel(arr: np.ndarray) -> Image.Image:
    u8 = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    img = Image.fromarray(u8, mode="RGB")
    return img.resize((img.width * CELL_SCALE, img.height * CELL_SCALE), Image.NEAREST)


def _error_panel(emap: ErrorMap) -> Image.Image:
    data = emap.data.astype(np.float64)
    lo, hi = float(data.min()), float(data.max())
    scaled = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    return _panel(scaled)


def export_visual_grid(sample_ids: list[str], store, out_path,
                       channels: list[Channel] | None = None,
                       config_hash: str | None = None) -> str:
    """Compose and write the grid PNG; returns the output path.

    `store` maps image id -> {"original": RGBImage, "channels": {Channel:
    {"removed": RGBImage, "reconstructed": RGBImage, "error": ErrorMap}}}.
    A missing id or channel entry raises CacheError.
    """
    if not sample_ids:
        raise CacheError("no samples requested for the visual grid")
    rows = []
    for sample_id in sample_ids:
        try:
            entry = store[sample_id]
        except KeyError:
            raise CacheError(f"no cached artifacts for sample {sample_id!r}")
        row_channels = channels or sorted(entry["channels"], key=lambda c: c.value)
        panels = [_panel(entry["original"].data)]
        try:
            first = entry["channels"][row_channels[0]]
            panels.append(_panel(first["removed"].data))
            for ch in row_channels:
                per = entry["channels"][ch]
                panels.append(_panel(per["reconstructed"].data))
                panels.append(_error_panel(per["error"]))
        except KeyError as exc:
            raise CacheError(f"missing channel artifacts for {sample_id!r}: {exc}")
        rows.append(panels)

    n_cols = len(rows[0])
    cell_w = rows[0][0].width
    cell_h = rows[0][0].height
    footer = 14
    width = PAD + n_cols * (cell_w + PAD)
    height = PAD + len(rows) * (cell_h + PAD) + footer
    canvas = Image.new("RGB", (width, height), (255, 255, 255))
    for r, panels in enumerate(rows):
        for c, panel in enumerate(panels):
            canvas.paste(panel, (PAD + c * (cell_w + PAD), PAD + r * (cell_h + PAD)))
    draw = ImageDraw.Draw(canvas)
    draw.text((PAD, height - footer + 2), MARGIN_NOTE, fill=(80, 80, 80))

    info = PngImagePlugin.PngInfo()
    if config_hash:
        info.add_text("config_hash", config_hash)
    canvas.save(out_path, format="PNG", pnginfo=info)
    return str(out_path)


def grid_expected_columns(n_channels: int) -> int:
    """Original + removed(first) + per-channel (reconstruction, error)."""
    return 2 + 2 * n_channels


def build_store_entry(original: RGBImage) -> dict:
    return {"original": original, "channels": {}}
