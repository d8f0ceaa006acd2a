"""Multiband raster container, flat binary on-disk format, and normalization.

A raster on disk is a pair of files sharing a base name: ``name.bin`` holds
band-sequential little-endian float32 planes, ``name.json`` is the header
with shape, band roles, nodata and geotransform. The pair round-trips
bit-for-bit for float32 data.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateBandError, MissingBandError

ROLES = ("NIR", "Red", "Green", "Blue")

_HEADER_KEYS = {"bands", "height", "width", "band_roles", "nodata", "geotransform", "dtype"}


@dataclass
class Raster:
    """Multiband image with named band roles.

    data : float array shaped [bands, height, width]
    band_roles : mapping role name -> band index (subset of ROLES allowed)
    nodata : sentinel value marking invalid samples, or None
    geotransform : affine pixel->world 6-tuple, or None
    """

    data: np.ndarray
    band_roles: dict[str, int] = field(default_factory=dict)
    nodata: float | None = None
    geotransform: tuple[float, ...] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"raster data must be [bands, height, width], got shape {self.data.shape}")
        seen = set()
        for role, idx in self.band_roles.items():
            if role not in ROLES:
                raise ValueError(f"unknown band role {role!r}, expected one of {ROLES}")
            if not 0 <= idx < self.data.shape[0]:
                raise ValueError(f"band role {role!r} maps to band {idx}, raster has {self.data.shape[0]} bands")
            if idx in seen:
                raise ValueError(f"two roles map to band {idx}")
            seen.add(idx)
        if self.geotransform is not None:
            self.geotransform = tuple(float(g) for g in self.geotransform)
            if len(self.geotransform) != 6:
                raise ValueError("geotransform must have 6 elements")
        if self.nodata is not None:
            self.nodata = float(self.nodata)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def band(self, role: str) -> np.ndarray:
        """Return the 2-D plane for a named role."""
        if role not in self.band_roles:
            raise MissingBandError(f"raster has no {role!r} band (roles: {sorted(self.band_roles)})")
        return self.data[self.band_roles[role]]

    def select_bands(self, roles: tuple[str, ...]) -> "Raster":
        """New raster holding only the given roles, in the given order."""
        idx = [self.band_roles[r] if r in self.band_roles else -1 for r in roles]
        missing = [r for r, i in zip(roles, idx) if i < 0]
        if missing:
            raise MissingBandError(f"raster is missing roles {missing}")
        data = self.data[idx].copy()
        return Raster(data, {r: k for k, r in enumerate(roles)}, self.nodata, self.geotransform)

    def valid_mask(self) -> np.ndarray:
        """Boolean [H, W] mask, True where no band equals nodata."""
        if self.nodata is None:
            return np.ones(self.data.shape[1:], dtype=bool)
        return ~np.any(self.data == self.nodata, axis=0)


@dataclass
class BandStats:
    """Per-band rescaling anchors fitted by normalize().

    ``low``/``high`` are the affine anchors actually used (equal to min/max for
    the minmax method, to the clipping percentiles otherwise). ``minimum`` and
    ``maximum`` record the observed data range.
    """

    method: str
    minimum: np.ndarray
    maximum: np.ndarray
    low: np.ndarray
    high: np.ndarray
    p_low: float | None = None
    p_high: float | None = None

    def __post_init__(self):
        self.minimum = np.asarray(self.minimum, dtype=np.float64)
        self.maximum = np.asarray(self.maximum, dtype=np.float64)
        self.low = np.asarray(self.low, dtype=np.float64)
        self.high = np.asarray(self.high, dtype=np.float64)
        ok = (self.minimum <= self.low) & (self.low <= self.high) & (self.high <= self.maximum)
        if not np.all(ok):
            raise ValueError("BandStats must satisfy min <= low <= high <= max per band")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "minimum": self.minimum.tolist(),
            "maximum": self.maximum.tolist(),
            "low": self.low.tolist(),
            "high": self.high.tolist(),
            "p_low": self.p_low,
            "p_high": self.p_high,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BandStats":
        return cls(
            method=d["method"],
            minimum=d["minimum"],
            maximum=d["maximum"],
            low=d["low"],
            high=d["high"],
            p_low=d.get("p_low"),
            p_high=d.get("p_high"),
        )


def _resolve_pair(path: str | os.PathLike) -> tuple[str, str]:
    base = str(path)
    for suffix in (".bin", ".json"):
        if base.endswith(suffix):
            base = base[: -len(suffix)]
    return base + ".bin", base + ".json"


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write payload to path via a temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_raster(raster: Raster, path: str | os.PathLike, extra: dict | None = None) -> None:
    """Write the .bin/.json pair for a raster.

    ``extra`` keys are merged into the JSON header (used e.g. to record the
    provenance of anomaly-map rasters); they are ignored by read_raster.
    """
    bin_path, json_path = _resolve_pair(path)
    header = {
        "bands": raster.bands,
        "height": raster.height,
        "width": raster.width,
        "band_roles": dict(raster.band_roles),
        "nodata": raster.nodata,
        "geotransform": list(raster.geotransform) if raster.geotransform is not None else None,
        "dtype": "f32",
    }
    if extra:
        overlap = set(extra) & _HEADER_KEYS
        if overlap:
            raise ValueError(f"extra header keys collide with the format: {sorted(overlap)}")
        header.update(extra)
    payload = np.ascontiguousarray(raster.data, dtype="<f4").tobytes()
    atomic_write_bytes(bin_path, payload)
    atomic_write_bytes(json_path, (json.dumps(header, sort_keys=True) + "\n").encode())


def read_header(path: str | os.PathLike) -> dict:
    """Return the raw JSON header of a raster pair."""
    _, json_path = _resolve_pair(path)
    if not os.path.exists(json_path):
        raise DataError(f"missing raster header {json_path}")
    with open(json_path) as fh:
        return json.load(fh)


def read_raster(path: str | os.PathLike) -> Raster:
    """Read a .bin/.json pair written by write_raster."""
    bin_path, json_path = _resolve_pair(path)
    header = read_header(path)
    if not os.path.exists(bin_path):
        raise DataError(f"missing raster payload {bin_path}")
    try:
        bands, height, width = (int(header[k]) for k in ("bands", "height", "width"))
        roles = {str(k): int(v) for k, v in (header.get("band_roles") or {}).items()}
        nodata = header.get("nodata")
        geo = header.get("geotransform")
        dtype = header.get("dtype", "f32")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed raster header {json_path}: {exc}") from exc
    if dtype != "f32":
        raise DataError(f"unsupported raster dtype {dtype!r} in {json_path}")
    data = np.fromfile(bin_path, dtype="<f4")
    expected = bands * height * width
    if data.size != expected:
        raise DataError(
            f"malformed raster {bin_path}: header declares {bands}x{height}x{width}"
            f" ({expected} values) but payload holds {data.size}"
        )
    data = data.reshape(bands, height, width)
    try:
        return Raster(data, roles, nodata, tuple(geo) if geo is not None else None)
    except ValueError as exc:
        raise DataError(f"malformed raster header {json_path}: {exc}") from exc


def _band_values(band: np.ndarray, nodata: float | None) -> np.ndarray:
    if nodata is None:
        return band.ravel()
    return band[band != nodata]


def normalize(
    raster: Raster,
    method: str = "percentile",
    p_low: float = 2.0,
    p_high: float = 98.0,
) -> tuple[Raster, BandStats]:
    """Rescale each band affinely to [0, 1]; nodata pixels are left untouched.

    method "minmax" maps the observed range to [0, 1] and raises
    DegenerateBandError on constant bands. method "percentile" clips each band
    to its (p_low, p_high) percentiles before rescaling, which is the default
    for training because raw sensor values have heavy tails.

    Returns the rescaled raster and the fitted BandStats, which can be
    re-applied to other scenes with apply_band_stats.
    """
    if raster.bands < 1:
        raise DataError("raster has no bands")
    if method not in ("minmax", "percentile"):
        raise ValueError(f"unknown normalization method {method!r}")
    if method == "percentile" and not 0.0 <= p_low < p_high <= 100.0:
        raise ValueError("percentile bounds must satisfy 0 <= p_low < p_high <= 100")

    mins, maxs, lows, highs = [], [], [], []
    for b in range(raster.bands):
        values = _band_values(raster.data[b], raster.nodata)
        if values.size == 0:
            raise DataError(f"band {b} has no valid (non-nodata) pixels")
        lo64 = float(np.min(values))
        hi64 = float(np.max(values))
        if method == "minmax":
            low, high = lo64, hi64
        else:
            low, high = (float(v) for v in np.percentile(values.astype(np.float64), (p_low, p_high)))
        if high <= low:
            raise DegenerateBandError(f"band {b} has zero value range under {method} normalization")
        mins.append(lo64)
        maxs.append(hi64)
        lows.append(low)
        highs.append(high)

    stats = BandStats(
        method=method,
        minimum=mins,
        maximum=maxs,
        low=lows,
        high=highs,
        p_low=p_low if method == "percentile" else None,
        p_high=p_high if method == "percentile" else None,
    )
    return apply_band_stats(raster, stats), stats


def apply_band_stats(raster: Raster, stats: BandStats) -> Raster:
    """Apply previously fitted BandStats to a raster (never re-fits).

    Values are clipped into the anchor range before rescaling so scenes unseen
    at fit time still land in [0, 1]. Nodata pixels pass through unchanged.
    """
    if stats.low.shape[0] != raster.bands:
        raise DataError(f"stats fitted on {stats.low.shape[0]} bands, raster has {raster.bands}")
    out = np.empty_like(raster.data)
    for b in range(raster.bands):
        band = raster.data[b].astype(np.float64)
        scaled = (np.clip(band, stats.low[b], stats.high[b]) - stats.low[b]) / (stats.high[b] - stats.low[b])
        scaled = scaled.astype(raster.data.dtype)
        if raster.nodata is not None:
            scaled = np.where(raster.data[b] == raster.nodata, raster.data[b], scaled)
        out[b] = scaled
    return Raster(out, dict(raster.band_roles), raster.nodata, raster.geotransform)


def from_geotiff(path: str | os.PathLike, band_roles: dict[str, int] | None = None) -> Raster:
    """Read-only GeoTIFF ingestion into the internal representation.

    Bands keep their file order (pages, or samples within a page). The
    geotransform is recovered from the ModelPixelScale/ModelTiepoint tags and
    nodata from the GDAL_NODATA tag when present. Requires tifffile.
    """
    try:
        import tifffile
    except ImportError as exc:
        raise DataError("GeoTIFF support requires the optional 'tifffile' dependency") from exc

    if not os.path.exists(path):
        raise DataError(f"missing file {path}")
    with tifffile.TiffFile(path) as tif:
        first = tif.pages[0]
        arrays = [np.atleast_3d(page.asarray()) for page in tif.pages]
        planes = []
        for arr in arrays:
            # atleast_3d puts single bands at [H, W, 1]; split trailing samples
            for s in range(arr.shape[2]):
                planes.append(np.asarray(arr[:, :, s], dtype=np.float32))
        tags = {tag.name: tag.value for tag in first.tags.values()}

    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise DataError(f"GeoTIFF bands disagree on shape: {sorted(shapes)}")
    data = np.stack(planes, axis=0)

    nodata = None
    if "GDAL_NODATA" in tags:
        try:
            nodata = float(str(tags["GDAL_NODATA"]).strip("\x00 "))
        except ValueError:
            nodata = None

    geotransform = None
    scale = tags.get("ModelPixelScaleTag")
    tie = tags.get("ModelTiepointTag")
    if scale is not None and tie is not None and len(tie) >= 6:
        i, j, _, x, y, _ = (float(v) for v in tie[:6])
        sx, sy = float(scale[0]), float(scale[1])
        # Shift the tiepoint back to the raster origin.
        geotransform = (x - i * sx, sx, 0.0, y + j * sy, 0.0, -sy)

    return Raster(data, band_roles or {}, nodata, geotransform)
