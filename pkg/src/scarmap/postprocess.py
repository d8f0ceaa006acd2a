"""Binarization and spectral-index cleanup of scene anomaly maps.

A stitched anomaly map is turned into a burnt-area mask in two moves: binary
segmentation (Otsu by default), then per-pixel keep-rules on vegetation,
water, and brightness indexes. Burns are de-vegetated, dry and dark, so a
detected pixel survives only while NDVI, NDWI and TMBI all stay *below* their
enabled ceilings; everything else is treated as a false positive (water,
clouds, bright man-made surfaces). Ceilings can be fixed by an operator or
grid-searched against a reference mask by maximizing F1 per index.

Index math expects reflectance-like band values (the raw scene, not the
model-input normalization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError, DegenerateMapError, MissingBandError
from .metrics import confusion, precision_recall_f1
from .raster import Raster, read_raster, write_raster

INDEX_NAMES = ("ndvi", "ndwi", "tmbi")


@dataclass
class IndexThresholds:
    """Keep-ceilings per spectral index; None disables a rule."""

    ndvi_max: float | None = None
    ndwi_max: float | None = None
    tmbi_max: float | None = None

    def __post_init__(self):
        if self.ndvi_max is not None and not -1.0 <= self.ndvi_max <= 1.0:
            raise ConfigError(f"ndvi_max must be in [-1, 1], got {self.ndvi_max}")
        if self.ndwi_max is not None and not -1.0 <= self.ndwi_max <= 1.0:
            raise ConfigError(f"ndwi_max must be in [-1, 1], got {self.ndwi_max}")
        if self.tmbi_max is not None and self.tmbi_max < 0.0:
            raise ConfigError(f"tmbi_max must be >= 0, got {self.tmbi_max}")

    def to_dict(self) -> dict:
        return {"ndvi_max": self.ndvi_max, "ndwi_max": self.ndwi_max, "tmbi_max": self.tmbi_max}

    @classmethod
    def from_dict(cls, d: dict) -> "IndexThresholds":
        known = {"ndvi_max", "ndwi_max", "tmbi_max"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown threshold keys: {sorted(unknown)}")
        return cls(**d)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Pixelwise num/den with the 0/0 pixel defined as 0."""
    num = num.astype(np.float64)
    den = den.astype(np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def compute_ndvi(raster: Raster) -> np.ndarray:
    """(NIR - Red) / (NIR + Red); 0/0 pixels map to 0."""
    nir, red = raster.band("NIR"), raster.band("Red")
    return _ratio(nir - red, nir + red)


def compute_ndwi(raster: Raster) -> np.ndarray:
    """(Green - NIR) / (Green + NIR); 0/0 pixels map to 0."""
    green, nir = raster.band("Green"), raster.band("NIR")
    return _ratio(green - nir, green + nir)


def compute_tmbi(raster: Raster, blue: Raster | None = None) -> np.ndarray:
    """sqrt((Blue^2 + Green^2 + Red^2) / 3).

    When the working raster has no Blue role (e.g. a NIR/Red/Green false-color
    composite), the Blue plane can come from an aligned single-band raster.
    """
    if "Blue" in raster.band_roles:
        blue_plane = raster.band("Blue")
    elif blue is not None:
        if blue.data.shape[1:] != raster.data.shape[1:]:
            raise DataError(f"auxiliary Blue raster shape {blue.data.shape[1:]} != scene {raster.data.shape[1:]}")
        blue_plane = blue.data[blue.band_roles.get("Blue", 0)]
    else:
        raise MissingBandError("TMBI needs a Blue band: none in the raster and no auxiliary raster given")
    b = blue_plane.astype(np.float64)
    g = raster.band("Green").astype(np.float64)
    r = raster.band("Red").astype(np.float64)
    return np.sqrt((b * b + g * g + r * r) / 3.0)


def otsu_threshold(scores: np.ndarray, bins: int = 256) -> float:
    """Histogram threshold maximizing inter-class variance.

    Returns the upper edge of the best cut bin, so ``scores > threshold``
    separates the two classes the scan found.
    """
    scores = np.asarray(scores, dtype=np.float64)
    lo, hi = float(np.min(scores)), float(np.max(scores))
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise DataError("scores must be finite")
    if hi <= lo:
        raise DegenerateMapError("constant map: Otsu thresholding is undefined")
    counts, edges = np.histogram(scores, bins=bins, range=(lo, hi))
    p = counts.astype(np.float64) / counts.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)[:-1]
    w1 = 1.0 - w0
    cum_mean = np.cumsum(p * centers)[:-1]
    total_mean = float(np.sum(p * centers))
    valid = (w0 > 0) & (w1 > 0)
    between = np.zeros_like(w0)
    mu0 = np.divide(cum_mean, w0, out=np.zeros_like(w0), where=valid)
    mu1 = np.divide(total_mean - cum_mean, w1, out=np.zeros_like(w1), where=valid)
    between[valid] = (w0 * w1 * (mu0 - mu1) ** 2)[valid]
    best = int(np.argmax(between))
    return float(edges[best + 1])


def binarize(scores, method: str = "otsu", value: float | None = None) -> np.ndarray:
    """Threshold an anomaly map into a boolean mask (True = anomalous).

    method "fixed" uses ``value`` as the threshold, "quantile" thresholds at
    the ``value`` quantile of the scores, "otsu" (default) picks the
    inter-class-variance optimum on a 256-bin histogram.
    """
    arr = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError("scores must be finite")
    if method == "fixed":
        if value is None:
            raise ConfigError("fixed binarization needs a threshold value")
        return arr > float(value)
    if method == "quantile":
        if value is None or not 0.0 <= value <= 1.0:
            raise ConfigError(f"quantile binarization needs a value in [0, 1], got {value}")
        if float(np.min(arr)) >= float(np.max(arr)):
            raise DegenerateMapError("constant map: quantile thresholding is undefined")
        return arr > float(np.quantile(arr, value))
    if method == "otsu":
        return arr > otsu_threshold(arr)
    raise ConfigError(f"unknown binarization method {method!r}")


def _index_keep(mask: np.ndarray, values: np.ndarray, ceiling: float) -> np.ndarray:
    return mask & (values <= ceiling)


def apply_index_filters(
    mask: np.ndarray,
    raster: Raster,
    thresholds: IndexThresholds,
    blue: Raster | None = None,
) -> np.ndarray:
    """Keep a detected pixel only if it passes every enabled index rule.

    Monotone: pixels are only ever turned off, never on.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != raster.data.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} != scene shape {raster.data.shape[1:]}")
    out = mask.copy()
    if thresholds.ndvi_max is not None:
        out = _index_keep(out, compute_ndvi(raster), thresholds.ndvi_max)
    if thresholds.ndwi_max is not None:
        out = _index_keep(out, compute_ndwi(raster), thresholds.ndwi_max)
    if thresholds.tmbi_max is not None:
        out = _index_keep(out, compute_tmbi(raster, blue=blue), thresholds.tmbi_max)
    return out


def select_thresholds(
    mask: np.ndarray,
    raster: Raster,
    ground_truth: np.ndarray,
    grids: dict[str, list[float]],
    valid: np.ndarray | None = None,
    blue: Raster | None = None,
) -> tuple[IndexThresholds, list[dict]]:
    """Grid-search each index ceiling independently, maximizing F1.

    Every candidate filters the *input* mask alone (indexes are not
    composed during search); the best value per index wins, ties resolving to
    the least restrictive (largest) ceiling. Returns the chosen thresholds and
    the full per-candidate table (index, threshold, precision, recall, f1).
    """
    mask = np.asarray(mask, dtype=bool)
    ground_truth = np.asarray(ground_truth, dtype=bool)
    if mask.shape != ground_truth.shape:
        raise ValueError(f"mask shape {mask.shape} != ground truth shape {ground_truth.shape}")
    if not ground_truth.any():
        raise DataError("ground truth has no positive pixels; F1 search is undefined")
    unknown = set(grids) - set(INDEX_NAMES)
    if unknown:
        raise ConfigError(f"unknown index names in grids: {sorted(unknown)}")

    index_values = {}
    for name in grids:
        if len(grids[name]) == 0:
            raise ConfigError(f"empty grid for index {name!r}")
        if name == "ndvi":
            index_values[name] = compute_ndvi(raster)
        elif name == "ndwi":
            index_values[name] = compute_ndwi(raster)
        else:
            index_values[name] = compute_tmbi(raster, blue=blue)

    chosen: dict[str, float | None] = {name: None for name in INDEX_NAMES}
    table: list[dict] = []
    for name in INDEX_NAMES:
        if name not in grids:
            continue
        best_key = None
        best_value = None
        for candidate in grids[name]:
            candidate = float(candidate)
            filtered = _index_keep(mask, index_values[name], candidate)
            m = precision_recall_f1(confusion(filtered, ground_truth, valid=valid))
            table.append(
                {
                    "index": name,
                    "threshold": candidate,
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                }
            )
            key = (m.f1 if m.f1 is not None else -1.0, candidate)
            if best_key is None or key > best_key:
                best_key, best_value = key, candidate
        chosen[name] = best_value
    return IndexThresholds(chosen["ndvi"], chosen["ndwi"], chosen["tmbi"]), table


def remove_small_components(mask: np.ndarray, min_pixels: int) -> np.ndarray:
    """Drop 8-connected components with area strictly below min_pixels."""
    if min_pixels < 0:
        raise ValueError(f"min_pixels must be >= 0, got {min_pixels}")
    mask = np.asarray(mask, dtype=bool)
    if min_pixels == 0:
        return mask.copy()
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return mask.copy()
    areas = np.bincount(labels.ravel())
    keep = areas >= min_pixels
    keep[0] = False
    return keep[labels]


def save_mask(mask: np.ndarray, path) -> None:
    """Persist a boolean mask as a 1-band 0/1 raster pair."""
    mask = np.asarray(mask, dtype=bool)
    write_raster(Raster(mask[None].astype(np.float32)), path, extra={"kind": "mask"})


def load_mask(path) -> np.ndarray:
    """Read a 0/1 raster pair back into a boolean mask."""
    raster = read_raster(path)
    if raster.bands != 1:
        raise DataError(f"mask raster must have 1 band, got {raster.bands}")
    return raster.data[0] > 0.5
