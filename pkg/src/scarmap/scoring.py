"""Per-pixel anomaly scores from a trained model, and patch-to-scene stitching.

The default score is the alignment map (AM): each latent position's squared
quantization distance, replicated back up to pixel resolution. The classical
reconstruction map (SM) and a weighted fusion are provided for comparison,
but AM alone is the shipped default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .model import VQVAE, _quantize_flat
from .patches import extract_patches
from .raster import Raster, read_header, read_raster, write_raster


@dataclass
class AnomalyMap:
    """Scene- or patch-sized field of non-negative anomaly scores."""

    scores: np.ndarray
    provenance: str = "am"

    def __post_init__(self):
        self.scores = np.asarray(self.scores)
        if self.scores.ndim != 2:
            raise ValueError(f"scores must be 2-D, got shape {self.scores.shape}")
        if not np.all(np.isfinite(self.scores)):
            raise DataError("anomaly scores must be finite")
        if np.any(self.scores < 0):
            raise DataError("anomaly scores must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


def upsample_nearest(grid: np.ndarray, factor: int) -> np.ndarray:
    """Replicate each cell into a factor x factor block."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    return np.repeat(np.repeat(grid, factor, axis=0), factor, axis=1)


def alignment_map(model: VQVAE, patch: np.ndarray) -> np.ndarray:
    """Patch-level AM: quantization distance per latent cell at pixel scale.

    One latent cell covers a 2^conv_layers square of pixels; the distance is
    replicated (not interpolated) so cell boundaries stay sharp.
    """
    grid = model.quantize(model.encode(patch))
    factor = model.cfg.input_size // grid.distances.shape[0]
    return upsample_nearest(grid.distances, factor)


def pixel_squared_error(patch: np.ndarray, recon: np.ndarray) -> np.ndarray:
    """Squared error per pixel, averaged over bands."""
    patch = np.asarray(patch)
    recon = np.asarray(recon)
    if patch.shape != recon.shape:
        raise ValueError(f"shape mismatch: {patch.shape} vs {recon.shape}")
    err = patch.astype(np.float64) - recon.astype(np.float64)
    return np.mean(err * err, axis=0)


def reconstruction_map(model: VQVAE, patch: np.ndarray) -> np.ndarray:
    """Patch-level SM: per-pixel squared error of the autoencoding path."""
    return pixel_squared_error(np.asarray(patch), model.reconstruct(patch))


def _minmax01(x: np.ndarray) -> np.ndarray:
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def fuse(am: np.ndarray, sm: np.ndarray, mode: str = "am_only", weight: float = 0.5) -> np.ndarray:
    """Combine AM and SM. am_only (the default) returns AM untouched.

    weighted mode min-max normalizes each map per patch before mixing,
    because the two scores live on unrelated scales.
    """
    am = np.asarray(am)
    sm = np.asarray(sm)
    if am.shape != sm.shape:
        raise ValueError(f"AM shape {am.shape} != SM shape {sm.shape}")
    if mode == "am_only":
        return am
    if mode == "sm_only":
        return sm
    if mode == "weighted":
        if not 0.0 <= weight <= 1.0:
            raise ConfigError(f"fusion weight must be in [0, 1], got {weight}")
        return weight * _minmax01(am) + (1.0 - weight) * _minmax01(sm)
    raise ConfigError(f"unknown fusion mode {mode!r}")


def stitch(
    patch_maps: list[np.ndarray],
    positions: list[tuple[int, int]],
    scene_shape: tuple[int, int],
    provenance: str = "am",
) -> AnomalyMap:
    """Assemble per-patch maps into one scene map, averaging overlaps.

    Contributions are accumulated as a running mean in a canonical
    (row, col)-sorted order, so the result is bit-identical under any input
    ordering and exactly lossless when all overlapping values agree (as they
    do when the maps are crops of a single scene).
    """
    if len(patch_maps) != len(positions):
        raise ValueError(f"{len(patch_maps)} maps but {len(positions)} positions")
    if len(patch_maps) == 0:
        raise DataError("cannot stitch an empty patch list")
    height, width = (int(v) for v in scene_shape)
    mean = np.zeros((height, width), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.int64)
    order = sorted(range(len(positions)), key=lambda i: (positions[i][0], positions[i][1]))
    for i in order:
        m = np.asarray(patch_maps[i])
        if m.ndim != 2:
            raise ValueError(f"patch map {i} must be 2-D, got shape {m.shape}")
        row, col = (int(v) for v in positions[i])
        if row < 0 or col < 0 or row + m.shape[0] > height or col + m.shape[1] > width:
            raise DataError(f"patch at ({row}, {col}) with shape {m.shape} exceeds scene {scene_shape}")
        region = (slice(row, row + m.shape[0]), slice(col, col + m.shape[1]))
        count[region] += 1
        mean[region] += (m - mean[region]) / count[region]
    if np.any(count == 0):
        uncovered = int(np.sum(count == 0))
        raise DataError(f"{uncovered} scene pixels are not covered by any patch")
    return AnomalyMap(mean, provenance)


def _patch_scores(model: VQVAE, batch: np.ndarray, mode: str, weight: float) -> list[np.ndarray]:
    """Score a [b, C, S, S] batch; returns one 2-D map per patch."""
    cfg = model.cfg
    z_e = model._encode_batch(batch.astype(model.dtype))
    b, depth, h, w = z_e.shape
    flat = np.ascontiguousarray(z_e.transpose(0, 2, 3, 1).reshape(-1, depth))
    _, z_q_flat, dist = _quantize_flat(model.codebook, flat)
    factor = cfg.input_size // h
    ams = [upsample_nearest(d, factor) for d in dist.reshape(b, h, w)]
    if mode == "am_only":
        return ams
    z_q = np.ascontiguousarray(z_q_flat.reshape(b, h, w, depth).transpose(0, 3, 1, 2))
    recon = model._decode_batch(z_q)
    sms = [pixel_squared_error(x, r) for x, r in zip(batch, recon)]
    return [fuse(am, sm, mode, weight) for am, sm in zip(ams, sms)]


def scene_anomaly_map(
    model: VQVAE,
    scene: Raster,
    stride: int,
    mode: str = "am_only",
    weight: float = 0.5,
    batch_size: int = 16,
) -> AnomalyMap:
    """Score a whole scene: select the model bands, apply the training-time
    normalization stats, run every patch, and stitch the results.

    The scene must carry every band role the model was trained on.
    """
    if mode not in ("am_only", "sm_only", "weighted"):
        raise ConfigError(f"unknown scoring mode {mode!r}")
    cfg = model.cfg
    try:
        selected = scene.select_bands(cfg.band_roles)
    except DataError as exc:
        raise DataError(
            f"scene bands {sorted(scene.band_roles)} do not cover the model input"
            f" {cfg.band_roles} ({scene.bands} scene bands vs {cfg.in_channels} model channels): {exc}"
        ) from exc
    if model.band_stats is not None:
        from .raster import apply_band_stats

        selected = apply_band_stats(selected, model.band_stats)
    patchset = extract_patches(selected, cfg.input_size, stride)
    maps: list[np.ndarray] = []
    for lo in range(0, len(patchset), batch_size):
        batch = patchset.patches[lo : lo + batch_size]
        maps.extend(_patch_scores(model, batch, mode, weight))
    provenance = {"am_only": "am", "sm_only": "sm"}.get(mode, f"fused(weighted,{weight})")
    return stitch(maps, patchset.positions, patchset.source_shape, provenance=provenance)


def save_anomaly_map(amap: AnomalyMap, path: str | os.PathLike) -> None:
    """Persist as a 1-band raster with the provenance in the sidecar."""
    raster = Raster(amap.scores[None].astype(np.float32))
    write_raster(raster, path, extra={"provenance": amap.provenance})


def load_anomaly_map(path: str | os.PathLike) -> AnomalyMap:
    raster = read_raster(path)
    if raster.bands != 1:
        raise DataError(f"anomaly-map raster must have 1 band, got {raster.bands}")
    provenance = read_header(path).get("provenance", "am")
    return AnomalyMap(raster.data[0], provenance)
