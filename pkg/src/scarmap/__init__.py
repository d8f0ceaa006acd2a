"""scarmap: unsupervised burnt-area extraction from multispectral rasters.

Train a vector-quantized autoencoder on normal (non-burnt) scenes, score new
scenes by the quantization distance of their latents (the alignment map),
stitch per-patch scores into scene maps, and refine them with spectral-index
post-processing and F1-driven thresholding.
"""

from .errors import (
    ConfigError,
    DataError,
    DegenerateBandError,
    DegenerateMapError,
    DivergenceError,
    MissingBandError,
    ScarmapError,
)
from .metrics import Metrics, confusion, evaluate_masks, f1_from_precision_recall, precision_recall_f1
from .model import (
    LatentGrid,
    LossBreakdown,
    ModelConfig,
    VQVAE,
    quantize,
    save_history_csv,
    toy_config,
    train,
)
from .patches import (
    AugmentConfig,
    PatchSet,
    augment,
    extract_patches,
    gaussian_blur,
    grid_anchors,
    load_patchset,
    save_patchset,
)
from .postprocess import (
    IndexThresholds,
    apply_index_filters,
    binarize,
    compute_ndvi,
    compute_ndwi,
    compute_tmbi,
    load_mask,
    otsu_threshold,
    remove_small_components,
    save_mask,
    select_thresholds,
)
from .raster import (
    BandStats,
    Raster,
    apply_band_stats,
    from_geotiff,
    normalize,
    read_raster,
    write_raster,
)
from .scoring import (
    AnomalyMap,
    alignment_map,
    fuse,
    load_anomaly_map,
    reconstruction_map,
    save_anomaly_map,
    scene_anomaly_map,
    stitch,
)
from .synth import SceneSpec, generate_burn_scene, generate_normal_scene

__version__ = "0.1.0"

__all__ = [
    "AnomalyMap",
    "AugmentConfig",
    "BandStats",
    "ConfigError",
    "DataError",
    "DegenerateBandError",
    "DegenerateMapError",
    "DivergenceError",
    "IndexThresholds",
    "LatentGrid",
    "LossBreakdown",
    "Metrics",
    "MissingBandError",
    "ModelConfig",
    "PatchSet",
    "Raster",
    "SceneSpec",
    "ScarmapError",
    "VQVAE",
    "alignment_map",
    "apply_band_stats",
    "apply_index_filters",
    "augment",
    "binarize",
    "compute_ndvi",
    "compute_ndwi",
    "compute_tmbi",
    "confusion",
    "evaluate_masks",
    "extract_patches",
    "f1_from_precision_recall",
    "from_geotiff",
    "fuse",
    "gaussian_blur",
    "generate_burn_scene",
    "generate_normal_scene",
    "grid_anchors",
    "load_anomaly_map",
    "load_mask",
    "load_patchset",
    "normalize",
    "otsu_threshold",
    "precision_recall_f1",
    "quantize",
    "read_raster",
    "reconstruction_map",
    "remove_small_components",
    "save_anomaly_map",
    "save_history_csv",
    "save_mask",
    "save_patchset",
    "scene_anomaly_map",
    "select_thresholds",
    "stitch",
    "toy_config",
    "train",
    "write_raster",
]
