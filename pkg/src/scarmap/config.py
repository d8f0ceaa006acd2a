"""Declarative run configuration shared by every CLI subcommand.

One JSON file describes a whole run; all randomness funnels through the
top-level ``seed`` (it becomes the model seed and the synthetic-scene seed
unless those sections override it explicitly). Unknown keys are rejected so
typos fail fast rather than silently falling back to defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import ModelConfig
from .patches import AugmentConfig
from .postprocess import IndexThresholds

_TOP_KEYS = {
    "seed",
    "output_dir",
    "paths",
    "model",
    "augment",
    "patch",
    "normalization",
    "scoring",
    "binarize",
    "filters",
    "synth",
    "report",
}

_PATH_KEYS = {"scene", "ground_truth", "checkpoint", "patches", "anomaly_map", "mask", "blue_band"}


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/out"
    paths: dict = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentConfig | None = None
    patch_size: int = 256
    patch_stride: int = 128
    norm_method: str = "percentile"
    norm_p_low: float = 2.0
    norm_p_high: float = 98.0
    scoring_mode: str = "am_only"
    scoring_weight: float = 0.5
    binarize_method: str = "otsu"
    binarize_value: float | None = None
    thresholds: IndexThresholds = field(default_factory=IndexThresholds)
    grids: dict | None = None
    min_component: int = 0
    synth: dict = field(default_factory=dict)
    report_count: int = 4
    report_positions: list | None = None

    def __post_init__(self):
        if self.patch_size < 1 or not 1 <= self.patch_stride <= self.patch_size:
            raise ConfigError(
                f"patch size/stride must satisfy size >= 1 and 1 <= stride <= size,"
                f" got size={self.patch_size} stride={self.patch_stride}"
            )
        if self.scoring_mode not in ("am_only", "sm_only", "weighted"):
            raise ConfigError(f"unknown scoring mode {self.scoring_mode!r}")
        if self.binarize_method not in ("otsu", "fixed", "quantile"):
            raise ConfigError(f"unknown binarization method {self.binarize_method!r}")
        if self.min_component < 0:
            raise ConfigError(f"min_component must be >= 0, got {self.min_component}")
        unknown = set(self.paths) - _PATH_KEYS
        if unknown:
            raise ConfigError(f"unknown path keys: {sorted(unknown)}")

    # Derived artifact locations inside output_dir.

    def path(self, key: str, default_name: str | None = None) -> str | None:
        if key in self.paths and self.paths[key]:
            return str(self.paths[key])
        if default_name is None:
            return None
        return os.path.join(self.output_dir, default_name)

    @property
    def checkpoint_dir(self) -> str:
        return self.path("checkpoint", "checkpoint")

    @property
    def patches_path(self) -> str:
        return self.path("patches", "patches")

    @property
    def anomaly_map_path(self) -> str:
        return self.path("anomaly_map", "anomaly_map")

    @property
    def mask_path(self) -> str:
        return self.path("mask", "mask")


def _expect_dict(value, name: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return value


def load_run_config(path: str | os.PathLike, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    """Parse and validate a JSON run config, applying CLI overrides."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    run_seed = int(seed if seed is not None else raw.get("seed", 0))
    out_dir = str(output_dir if output_dir is not None else raw.get("output_dir", "runs/out"))

    model_dict = dict(_expect_dict(raw.get("model", {}), "model"))
    model_dict.setdefault("seed", run_seed)
    try:
        model = ModelConfig.from_dict(model_dict)
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from exc

    augment_cfg = None
    if raw.get("augment") is not None:
        try:
            augment_cfg = AugmentConfig.from_dict(_expect_dict(raw["augment"], "augment"))
        except TypeError as exc:
            raise ConfigError(f"bad augment config: {exc}") from exc

    patch = _expect_dict(raw.get("patch", {}), "patch")
    if set(patch) - {"size", "stride"}:
        raise ConfigError(f"unknown patch keys: {sorted(set(patch) - {'size', 'stride'})}")

    norm = _expect_dict(raw.get("normalization", {}), "normalization")
    if set(norm) - {"method", "p_low", "p_high"}:
        raise ConfigError(f"unknown normalization keys: {sorted(set(norm) - {'method', 'p_low', 'p_high'})}")

    scoring = _expect_dict(raw.get("scoring", {}), "scoring")
    if set(scoring) - {"mode", "weight"}:
        raise ConfigError(f"unknown scoring keys: {sorted(set(scoring) - {'mode', 'weight'})}")

    binarize = _expect_dict(raw.get("binarize", {}), "binarize")
    if set(binarize) - {"method", "value"}:
        raise ConfigError(f"unknown binarize keys: {sorted(set(binarize) - {'method', 'value'})}")

    filters = _expect_dict(raw.get("filters", {}), "filters")
    if set(filters) - {"thresholds", "grids", "min_component"}:
        raise ConfigError(
            f"unknown filter keys: {sorted(set(filters) - {'thresholds', 'grids', 'min_component'})}"
        )
    thresholds = IndexThresholds.from_dict(_expect_dict(filters.get("thresholds", {}), "filters.thresholds"))
    grids = filters.get("grids")
    if grids is not None:
        grids = {str(k): [float(v) for v in vals] for k, vals in _expect_dict(grids, "filters.grids").items()}

    synth = dict(_expect_dict(raw.get("synth", {}), "synth"))
    report = _expect_dict(raw.get("report", {}), "report")
    if set(report) - {"count", "positions"}:
        raise ConfigError(f"unknown report keys: {sorted(set(report) - {'count', 'positions'})}")

    return RunConfig(
        seed=run_seed,
        output_dir=out_dir,
        paths={k: v for k, v in _expect_dict(raw.get("paths", {}), "paths").items()},
        model=model,
        augment=augment_cfg,
        patch_size=int(patch.get("size", 256)),
        patch_stride=int(patch.get("stride", 128)),
        norm_method=str(norm.get("method", "percentile")),
        norm_p_low=float(norm.get("p_low", 2.0)),
        norm_p_high=float(norm.get("p_high", 98.0)),
        scoring_mode=str(scoring.get("mode", "am_only")),
        scoring_weight=float(scoring.get("weight", 0.5)),
        binarize_method=str(binarize.get("method", "otsu")),
        binarize_value=(None if binarize.get("value") is None else float(binarize["value"])),
        thresholds=thresholds,
        grids=grids,
        min_component=int(filters.get("min_component", 0)),
        synth=synth,
        report_count=int(report.get("count", 4)),
        report_positions=report.get("positions"),
    )
