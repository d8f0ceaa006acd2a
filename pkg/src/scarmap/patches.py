"""Patch extraction over a regular grid and seeded augmentation.

Scenes are cut into square windows on a (size, stride) grid. When a scene
dimension is not an exact multiple of the stride, one extra window is anchored
flush to the trailing edge, so every pixel is covered without padding and no
synthetic values enter training or scoring.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .errors import ConfigError, DataError
from .raster import Raster, atomic_write_bytes


@dataclass
class PatchSet:
    """Ordered patches plus the top-left scene coordinates they came from."""

    patches: np.ndarray  # [n, bands, size, size]
    positions: list[tuple[int, int]]
    size: int
    stride: int
    source_shape: tuple[int, int]

    def __post_init__(self):
        self.positions = [(int(r), int(c)) for r, c in self.positions]
        if self.patches.ndim != 4 or self.patches.shape[0] != len(self.positions):
            raise ValueError("patches must be [n, bands, size, size] matching positions")

    def __len__(self) -> int:
        return self.patches.shape[0]


@dataclass
class AugmentConfig:
    """Augmentation switches and their per-op apply probabilities.

    Flips and quarter-turn rotations default to probability 0.5 and are meant
    for load-time use; the Gaussian blur (kernel 11, sigma 5) defaults to
    probability 1.0 and is meant as a one-off dataset-preparation pass that
    suppresses fine man-made structure.
    """

    h_flip: bool = True
    v_flip: bool = True
    rotations: tuple[int, ...] = (1, 2, 3)  # quarter turns
    blur_kernel: int = 11
    blur_sigma: float = 5.0
    p_flip: float = 0.5
    p_rotate: float = 0.5
    p_blur: float = 1.0

    def __post_init__(self):
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise ConfigError(f"blur kernel must be odd and >= 1, got {self.blur_kernel}")
        for name in ("p_flip", "p_rotate", "p_blur"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if not set(self.rotations) <= {1, 2, 3}:
            raise ConfigError(f"rotations must be quarter turns from {{1, 2, 3}}, got {self.rotations}")

    def to_dict(self) -> dict:
        return {
            "h_flip": self.h_flip,
            "v_flip": self.v_flip,
            "rotations": list(self.rotations),
            "blur_kernel": self.blur_kernel,
            "blur_sigma": self.blur_sigma,
            "p_flip": self.p_flip,
            "p_rotate": self.p_rotate,
            "p_blur": self.p_blur,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        if "rotations" in d:
            d["rotations"] = tuple(d["rotations"])
        return cls(**d)


def grid_anchors(dim: int, size: int, stride: int) -> list[int]:
    """Window anchors along one axis, with a flush trailing anchor if needed."""
    anchors = list(range(0, dim - size + 1, stride))
    if anchors[-1] != dim - size:
        anchors.append(dim - size)
    return anchors


def extract_patches(source: Raster | np.ndarray, size: int, stride: int) -> PatchSet:
    """Cut a scene into patches on a regular (size, stride) grid.

    Accepts a Raster or a bare [bands, H, W] / [H, W] array. Positions are
    unique and sorted row-major; together with stitch() this reproduces the
    scene exactly.
    """
    data = source.data if isinstance(source, Raster) else np.asarray(source)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise ValueError(f"expected [bands, H, W] or [H, W], got shape {data.shape}")
    if size < 1:
        raise ValueError(f"patch size must be >= 1, got {size}")
    if not 1 <= stride <= size:
        raise ValueError(f"stride must be in [1, size], got {stride}")
    _, height, width = data.shape
    if height < size or width < size:
        raise DataError(f"scene {height}x{width} is smaller than the {size}x{size} patch size")

    rows = grid_anchors(height, size, stride)
    cols = grid_anchors(width, size, stride)
    positions = [(r, c) for r in rows for c in cols]
    patches = np.stack([data[:, r : r + size, c : c + size] for r, c in positions])
    return PatchSet(patches, positions, size, stride, (height, width))


def gaussian_kernel(kernel: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps of the given length."""
    radius = (kernel - 1) / 2.0
    x = np.arange(kernel, dtype=np.float64) - radius
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_blur(patch: np.ndarray, kernel: int = 11, sigma: float = 5.0) -> np.ndarray:
    """Separable Gaussian blur per band with mirrored borders.

    Computed in float64 and cast back, so constant inputs survive exactly and
    outputs stay within the input value range.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError(f"blur kernel must be odd and >= 1, got {kernel}")
    taps = gaussian_kernel(kernel, sigma)
    out = patch.astype(np.float64)
    out = convolve1d(out, taps, axis=-1, mode="mirror")
    out = convolve1d(out, taps, axis=-2, mode="mirror")
    return out.astype(patch.dtype)


def augment(patch: np.ndarray, cfg: AugmentConfig, rng_seed: int) -> np.ndarray:
    """Apply the configured augmentations to one [bands, S, S] patch.

    Deterministic given (patch, cfg, rng_seed): the rng draws one gate per
    enabled op in a fixed order (h-flip, v-flip, rotation, blur).
    """
    if patch.ndim == 2:
        patch = patch[None]
    if patch.ndim != 3 or patch.shape[1] != patch.shape[2]:
        raise ValueError(f"expected a square [bands, S, S] patch, got shape {patch.shape}")
    if not np.all(np.isfinite(patch)):
        raise DataError("patch contains non-finite values")
    rng = np.random.default_rng(rng_seed)
    out = patch
    if cfg.h_flip and rng.random() < cfg.p_flip:
        out = out[:, :, ::-1]
    if cfg.v_flip and rng.random() < cfg.p_flip:
        out = out[:, ::-1, :]
    if cfg.rotations and rng.random() < cfg.p_rotate:
        k = int(rng.choice(sorted(cfg.rotations)))
        out = np.rot90(out, k=k, axes=(1, 2))
    if rng.random() < cfg.p_blur:
        out = gaussian_blur(np.ascontiguousarray(out), cfg.blur_kernel, cfg.blur_sigma)
    return np.ascontiguousarray(out)


def patch_seed(root_seed: int, epoch: int, index: int) -> int:
    """Deterministic per-patch augmentation seed from (epoch, patch index)."""
    ss = np.random.SeedSequence((root_seed, epoch, index))
    return int(ss.generate_state(1)[0])


def save_patchset(ps: PatchSet, path: str | os.PathLike, extras: dict | None = None) -> None:
    """Persist a PatchSet as name.bin (stacked patches) + name.json manifest."""
    base = str(path)
    for suffix in (".bin", ".json"):
        if base.endswith(suffix):
            base = base[: -len(suffix)]
    manifest = {
        "n": len(ps),
        "bands": int(ps.patches.shape[1]),
        "size": ps.size,
        "stride": ps.stride,
        "source_shape": list(ps.source_shape),
        "positions": [list(p) for p in ps.positions],
        "dtype": "f32",
    }
    if extras:
        manifest["extras"] = extras
    atomic_write_bytes(base + ".bin", np.ascontiguousarray(ps.patches, dtype="<f4").tobytes())
    atomic_write_bytes(base + ".json", (json.dumps(manifest, sort_keys=True) + "\n").encode())


def load_patchset(path: str | os.PathLike) -> tuple[PatchSet, dict]:
    """Load a PatchSet saved by save_patchset; returns (patchset, extras)."""
    base = str(path)
    for suffix in (".bin", ".json"):
        if base.endswith(suffix):
            base = base[: -len(suffix)]
    if not os.path.exists(base + ".json"):
        raise DataError(f"missing patch manifest {base}.json")
    with open(base + ".json") as fh:
        manifest = json.load(fh)
    try:
        n, bands, size = (int(manifest[k]) for k in ("n", "bands", "size"))
        stride = int(manifest["stride"])
        source_shape = tuple(int(v) for v in manifest["source_shape"])
        positions = [tuple(int(v) for v in p) for p in manifest["positions"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed patch manifest {base}.json: {exc}") from exc
    data = np.fromfile(base + ".bin", dtype="<f4")
    expected = n * bands * size * size
    if data.size != expected:
        raise DataError(f"malformed patch payload {base}.bin: expected {expected} values, got {data.size}")
    ps = PatchSet(data.reshape(n, bands, size, size), positions, size, stride, source_shape)
    return ps, manifest.get("extras", {})
