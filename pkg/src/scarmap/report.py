"""Static PNG emission: false-color panels, score heatmaps, mask overlays.

Images are composed as plain uint8 arrays and written through PIL, so a given
model + scene + seed always produces byte-identical files.
"""

from __future__ import annotations

import io
import os

import numpy as np
from PIL import Image

from .model import VQVAE
from .raster import atomic_write_bytes
from .scoring import alignment_map


def to_uint8(arr: np.ndarray, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Linear rescale to 0..255 (constant inputs map to 0)."""
    arr = np.asarray(arr, dtype=np.float64)
    lo = float(np.min(arr)) if lo is None else lo
    hi = float(np.max(arr)) if hi is None else hi
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.uint8)
    scaled = np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
    return (scaled * 255.0 + 0.5).astype(np.uint8)


def false_color(patch: np.ndarray) -> np.ndarray:
    """[3, H, W] bands -> [H, W, 3] uint8 display composite."""
    patch = np.asarray(patch)
    if patch.ndim != 3 or patch.shape[0] != 3:
        raise ValueError(f"expected [3, H, W], got shape {patch.shape}")
    return np.stack([to_uint8(patch[i], 0.0, 1.0) for i in range(3)], axis=-1)


def heatmap(scores: np.ndarray) -> np.ndarray:
    """Black -> red -> yellow ramp for a score map, as [H, W, 3] uint8."""
    s = to_uint8(scores).astype(np.float64) / 255.0
    r = np.clip(2.0 * s, 0.0, 1.0)
    g = np.clip(2.0 * s - 1.0, 0.0, 1.0)
    b = np.zeros_like(s)
    return (np.stack([r, g, b], axis=-1) * 255.0 + 0.5).astype(np.uint8)


def mask_overlay(rgb: np.ndarray, mask: np.ndarray, color=(255, 0, 0), alpha: float = 0.5) -> np.ndarray:
    """Tint masked pixels of an RGB image."""
    rgb = np.asarray(rgb, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if rgb.shape[:2] != mask.shape:
        raise ValueError(f"image shape {rgb.shape[:2]} != mask shape {mask.shape}")
    out = rgb.copy()
    out[mask] = (1.0 - alpha) * rgb[mask] + alpha * np.asarray(color, dtype=np.float64)
    return (out + 0.5).astype(np.uint8)


def hstack_panels(panels: list[np.ndarray], pad: int = 4) -> np.ndarray:
    """Place equally sized [H, W, 3] panels side by side with white gutters."""
    height = panels[0].shape[0]
    gutter = np.full((height, pad, 3), 255, dtype=np.uint8)
    pieces = []
    for i, p in enumerate(panels):
        if p.shape[0] != height:
            raise ValueError("panels must share a height")
        if i:
            pieces.append(gutter)
        pieces.append(p)
    return np.concatenate(pieces, axis=1)


def save_png(image: np.ndarray, path: str | os.PathLike) -> None:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    atomic_write_bytes(str(path), buf.getvalue())


def patch_triptych(model: VQVAE, patch: np.ndarray) -> np.ndarray:
    """input | reconstruction | alignment map, as one image."""
    recon = model.reconstruct(patch)
    am = alignment_map(model, patch)
    if patch.shape[0] == 3:
        left, mid = false_color(patch), false_color(np.clip(recon, 0.0, 1.0))
    else:
        left = np.repeat(to_uint8(patch[0], 0.0, 1.0)[..., None], 3, axis=-1)
        mid = np.repeat(to_uint8(np.clip(recon[0], 0.0, 1.0))[..., None], 3, axis=-1)
    return hstack_panels([left, mid, heatmap(am)])
