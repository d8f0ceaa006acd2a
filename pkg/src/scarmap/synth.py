"""Reproducible synthetic multispectral scenes with exact burn ground truth.

Scenes imitate a 4-band (NIR, Red, Green, Blue) vegetation mosaic using
multi-octave value noise, with NIR kept well above Red so the vegetation
signal is unambiguous. Burns are unions of jittered disks whose band
multipliers darken NIR hard and the visible bands mildly, which pins their
NDVI and TMBI strictly below the normal-scene values. Optional cloud blobs
are bright in every band: anomalous to a model trained on vegetation, but
removable by a brightness ceiling, which is exactly the false-positive
behaviour the post-processing stage exists to fix.

The ground-truth mask marks burn pixels only; clouds are deliberate
distractors and never enter the truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .raster import Raster

BAND_ORDER = ("NIR", "Red", "Green", "Blue")

_DEFAULT_RANGES = {
    "NIR": (0.50, 0.85),
    "Red": (0.12, 0.30),
    "Green": (0.15, 0.35),
    "Blue": (0.05, 0.22),
}

_DEFAULT_BURN = {"NIR": 0.10, "Red": 0.50, "Green": 0.45, "Blue": 0.40}


@dataclass
class SceneSpec:
    """Everything needed to regenerate a scene bit-for-bit."""

    size: tuple[int, int] = (512, 512)
    seed: int = 0
    texture_scale: int = 64
    texture_octaves: int = 4
    texture_detail: float = 0.3
    band_ranges: dict = field(default_factory=lambda: dict(_DEFAULT_RANGES))
    n_burns: int = 0
    burn_radius: tuple[float, float] = (16.0, 40.0)
    burn_multipliers: dict = field(default_factory=lambda: dict(_DEFAULT_BURN))
    burn_texture: float = 0.0
    n_clouds: int = 0
    cloud_radius: tuple[float, float] = (24.0, 56.0)
    cloud_brightness: tuple[float, float] = (0.85, 1.0)

    def __post_init__(self):
        self.size = (int(self.size[0]), int(self.size[1]))
        if min(self.size) < 8:
            raise ConfigError(f"scene size must be at least 8x8, got {self.size}")
        if self.texture_scale < 1 or self.texture_octaves < 1:
            raise ConfigError("texture_scale and texture_octaves must be >= 1")
        if not 0.0 <= self.texture_detail <= 1.0:
            raise ConfigError(f"texture_detail must be in [0, 1], got {self.texture_detail}")
        if set(self.band_ranges) != set(BAND_ORDER):
            raise ConfigError(f"band_ranges must cover exactly {BAND_ORDER}")
        for band, (lo, hi) in self.band_ranges.items():
            if not 0.0 <= lo < hi <= 1.0:
                raise ConfigError(f"band range for {band} must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
        if set(self.burn_multipliers) != set(BAND_ORDER):
            raise ConfigError(f"burn_multipliers must cover exactly {BAND_ORDER}")
        for band, m in self.burn_multipliers.items():
            if not 0.0 < m <= 1.0:
                raise ConfigError(f"burn multiplier for {band} must be in (0, 1], got {m}")
        if self.n_burns < 0 or self.n_clouds < 0:
            raise ConfigError("n_burns and n_clouds must be >= 0")
        if not 0.0 <= self.burn_texture < 2.0:
            raise ConfigError(f"burn_texture must be in [0, 2), got {self.burn_texture}")
        if not 0 < self.burn_radius[0] <= self.burn_radius[1]:
            raise ConfigError(f"burn_radius must be an increasing positive pair, got {self.burn_radius}")
        if not 0 < self.cloud_radius[0] <= self.cloud_radius[1]:
            raise ConfigError(f"cloud_radius must be an increasing positive pair, got {self.cloud_radius}")
        lo, hi = self.cloud_brightness
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"cloud_brightness must satisfy 0 < lo <= hi <= 1, got {self.cloud_brightness}")


def _bilinear(grid: np.ndarray, cell: int, height: int, width: int) -> np.ndarray:
    """Bilinearly upsample a coarse node grid to (height, width)."""
    u = np.arange(height) / cell
    v = np.arange(width) / cell
    i0 = u.astype(int)
    j0 = v.astype(int)
    fy = (u - i0)[:, None]
    fx = (v - j0)[None, :]
    g00 = grid[np.ix_(i0, j0)]
    g01 = grid[np.ix_(i0, j0 + 1)]
    g10 = grid[np.ix_(i0 + 1, j0)]
    g11 = grid[np.ix_(i0 + 1, j0 + 1)]
    return (1 - fy) * ((1 - fx) * g00 + fx * g01) + fy * ((1 - fx) * g10 + fx * g11)


def _smooth_noise(rng: np.random.Generator, shape: tuple[int, int], scale: int, octaves: int) -> np.ndarray:
    """Multi-octave value noise stretched to exactly [0, 1]."""
    height, width = shape
    total = np.zeros(shape, dtype=np.float64)
    amplitude = 1.0
    for octave in range(octaves):
        cell = max(1, scale >> octave)
        nodes = rng.random((height // cell + 2, width // cell + 2))
        total += amplitude * _bilinear(nodes, cell, height, width)
        amplitude *= 0.5
    lo, hi = float(total.min()), float(total.max())
    if hi <= lo:  # octaves of random nodes are never constant in practice
        return np.zeros(shape, dtype=np.float64)
    return (total - lo) / (hi - lo)


def _blob_mask(rng: np.random.Generator, shape: tuple[int, int], center: tuple[float, float], radius: float) -> np.ndarray:
    """Irregular blob: a primary disk plus a few jittered satellites.

    The union always contains a disk of radius 0.75r and stays inside 1.35r,
    which bounds the blob area between pi*(r/2)^2 and pi*(1.5r)^2.
    """
    cy, cx = center
    disks = [(cy, cx, radius * rng.uniform(0.75, 1.0))]
    for _ in range(int(rng.integers(4, 8))):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        offset = radius * rng.uniform(0.2, 0.7)
        disks.append(
            (
                cy + offset * math.sin(angle),
                cx + offset * math.cos(angle),
                radius * rng.uniform(0.35, 0.6),
            )
        )
    yy = np.arange(shape[0], dtype=np.float64)[:, None]
    xx = np.arange(shape[1], dtype=np.float64)[None, :]
    mask = np.zeros(shape, dtype=bool)
    for dy, dx, r in disks:
        mask |= (yy - dy) ** 2 + (xx - dx) ** 2 <= r * r
    return mask


def _base_scene(spec: SceneSpec) -> np.ndarray:
    """The burn-free 4-band scene for a spec's seed, values in [0, 1]."""
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0)))
    shared = _smooth_noise(rng, spec.size, spec.texture_scale, spec.texture_octaves)
    data = np.empty((len(BAND_ORDER), *spec.size), dtype=np.float32)
    for i, band in enumerate(BAND_ORDER):
        detail = _smooth_noise(rng, spec.size, max(1, spec.texture_scale // 2), spec.texture_octaves)
        mix = (1.0 - spec.texture_detail) * shared + spec.texture_detail * detail
        lo, hi = spec.band_ranges[band]
        data[i] = (lo + mix * (hi - lo)).astype(np.float32)
    return data


def _scene_raster(data: np.ndarray) -> Raster:
    return Raster(data, {band: i for i, band in enumerate(BAND_ORDER)})


def generate_normal_scene(spec: SceneSpec) -> Raster:
    """Vegetation-only scene; requires n_burns == 0 and n_clouds == 0."""
    if spec.n_burns != 0:
        raise ConfigError(f"normal scene requires n_burns == 0, got {spec.n_burns}")
    if spec.n_clouds != 0:
        raise ConfigError(f"normal scene requires n_clouds == 0, got {spec.n_clouds}")
    return _scene_raster(_base_scene(spec))


def _place_blobs(
    rng: np.random.Generator,
    shape: tuple[int, int],
    count: int,
    radius_range: tuple[float, float],
    kind: str,
) -> list[np.ndarray]:
    height, width = shape
    blobs = []
    for _ in range(count):
        radius = float(rng.uniform(*radius_range))
        margin = int(math.ceil(1.35 * radius)) + 1
        if 2 * margin >= height or 2 * margin >= width:
            raise ConfigError(
                f"a {kind} of radius {radius:.1f} cannot fit inside a {height}x{width} scene"
            )
        cy = float(rng.uniform(margin, height - margin))
        cx = float(rng.uniform(margin, width - margin))
        blobs.append(_blob_mask(rng, shape, (cy, cx), radius))
    return blobs


def generate_burn_scene(spec: SceneSpec) -> tuple[Raster, np.ndarray]:
    """Scene with n_burns burn scars (and optional cloud distractors).

    Returns the raster and the exact boolean burn mask. The underlying
    vegetation equals generate_normal_scene for the same seed; only masked
    pixels differ. Clouds never overlap burns and are not part of the truth.
    """
    if spec.n_burns < 1:
        raise ConfigError(f"burn scene requires n_burns >= 1, got {spec.n_burns}")
    data = _base_scene(spec).copy()

    burn_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 1)))
    burn_mask = np.zeros(spec.size, dtype=bool)
    for blob in _place_blobs(burn_rng, spec.size, spec.n_burns, spec.burn_radius, "burn"):
        burn_mask |= blob
    # A burn erases the vegetation structure: pixels become multiplier x the
    # scene's median band level, times an optional char-mottle factor that is
    # shared across bands, so band ratios (hence NDVI/NDWI) stay fixed
    # everywhere inside the scar.
    factor = np.ones(int(burn_mask.sum()), dtype=np.float32)
    if spec.burn_texture > 0:
        eta = burn_rng.random(factor.size)
        factor = (1.0 + spec.burn_texture * (eta - 0.5)).astype(np.float32)
    for i, band in enumerate(BAND_ORDER):
        plane = data[i]
        level = np.float32(spec.burn_multipliers[band]) * np.float32(np.median(plane))
        plane[burn_mask] = np.clip(level * factor, np.float32(1e-4), np.float32(1.0))

    if spec.n_clouds > 0:
        cloud_rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 2)))
        cloud_mask = np.zeros(spec.size, dtype=bool)
        for blob in _place_blobs(cloud_rng, spec.size, spec.n_clouds, spec.cloud_radius, "cloud"):
            cloud_mask |= blob
        cloud_mask &= ~burn_mask
        brightness = cloud_rng.uniform(*spec.cloud_brightness, size=int(cloud_mask.sum()))
        for i in range(len(BAND_ORDER)):
            data[i][cloud_mask] = brightness.astype(np.float32)

    return _scene_raster(data), burn_mask
