"""Command-line pipeline: synth -> prepare -> train -> predict -> postprocess
-> evaluate (-> report), all driven by one JSON run config.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import RunConfig, load_run_config
from .errors import ConfigError, DataError, DivergenceError
from .metrics import evaluate_masks, write_metrics_csv, write_metrics_json
from .model import VQVAE, save_history_csv, train
from .patches import extract_patches, gaussian_blur, load_patchset, save_patchset
from .postprocess import (
    apply_index_filters,
    binarize,
    load_mask,
    remove_small_components,
    save_mask,
    select_thresholds,
)
from .raster import BandStats, atomic_write_bytes, normalize, read_raster, write_raster
from .report import false_color, mask_overlay, patch_triptych, save_png
from .scoring import load_anomaly_map, save_anomaly_map, scene_anomaly_map
from .synth import SceneSpec, generate_burn_scene, generate_normal_scene


def cmd_synth(cfg: RunConfig) -> None:
    """Write synthetic scenes (and burn ground truth) into output_dir."""
    section = dict(cfg.synth)
    n_normal = int(section.pop("normal_scenes", 1))
    n_burn = int(section.pop("burn_scenes", 0))
    if n_normal < 0 or n_burn < 0:
        raise ConfigError("normal_scenes and burn_scenes must be >= 0")
    for i in range(n_normal):
        spec = SceneSpec(seed=cfg.seed + i, **{**section, "n_burns": 0, "n_clouds": 0})
        scene = generate_normal_scene(spec)
        write_raster(scene, os.path.join(cfg.output_dir, f"normal_{i:03d}"))
        print(f"wrote normal_{i:03d} ({scene.height}x{scene.width})")
    burn_section = dict(section)
    burn_section.setdefault("n_burns", 2)
    for i in range(n_burn):
        spec = SceneSpec(seed=cfg.seed + 10_000 + i, **burn_section)
        scene, truth = generate_burn_scene(spec)
        write_raster(scene, os.path.join(cfg.output_dir, f"burn_{i:03d}"))
        save_mask(truth, os.path.join(cfg.output_dir, f"burn_{i:03d}_truth"))
        print(f"wrote burn_{i:03d} ({int(truth.sum())} burn pixels)")


def cmd_prepare(cfg: RunConfig) -> None:
    """Scene -> normalized model-band patches on disk."""
    scene_path = cfg.path("scene")
    if not scene_path:
        raise ConfigError("prepare needs paths.scene")
    scene = read_raster(scene_path)
    selected = scene.select_bands(cfg.model.band_roles)
    normalized, stats = normalize(selected, cfg.norm_method, cfg.norm_p_low, cfg.norm_p_high)
    patchset = extract_patches(normalized, cfg.patch_size, cfg.patch_stride)
    blurred = cfg.augment is not None and cfg.augment.p_blur > 0
    if blurred:
        # Blur is a one-off dataset-preparation pass over every patch.
        patchset.patches = np.stack(
            [gaussian_blur(p, cfg.augment.blur_kernel, cfg.augment.blur_sigma) for p in patchset.patches]
        )
    extras = {
        "band_stats": stats.to_dict(),
        "band_roles": list(cfg.model.band_roles),
        "source_scene": str(scene_path),
        "blurred": blurred,
    }
    save_patchset(patchset, cfg.patches_path, extras=extras)
    print(f"wrote {len(patchset)} patches to {cfg.patches_path}.bin/.json")


def cmd_train(cfg: RunConfig, resume: bool = False) -> None:
    """Patches -> checkpoint directory + loss history CSV."""
    patchset, extras = load_patchset(cfg.patches_path)
    stats = BandStats.from_dict(extras["band_stats"]) if extras.get("band_stats") else None
    initial = None
    model_cfg = cfg.model
    if resume:
        initial = VQVAE.load(cfg.checkpoint_dir)
        model_cfg = initial.cfg  # resuming keeps the checkpoint's architecture
    load_augment = None
    if cfg.augment is not None:
        load_augment = dataclasses.replace(cfg.augment, p_blur=0.0)  # blur already applied by prepare
    model, history = train(
        patchset,
        model_cfg,
        augment_cfg=load_augment,
        initial=initial,
        band_stats=stats,
        on_epoch=lambda e, lb: print(f"epoch {e}: total={lb.total:.6f} rec={lb.reconstruction:.6f}"),
    )
    if model.codebook_usage:
        active = int(np.count_nonzero(model.codebook_usage[-1]))
        print(f"codebook usage: {active}/{model_cfg.codebook_size} codes active in the last epoch")
    model.save(cfg.checkpoint_dir)
    start = model.epochs_completed - len(history)
    save_history_csv(history, os.path.join(cfg.output_dir, "loss_history.csv"), start_epoch=start)
    print(f"checkpoint at {cfg.checkpoint_dir} after {model.epochs_completed} epochs")


def cmd_predict(cfg: RunConfig, mode: str | None = None) -> None:
    """Scene -> stitched anomaly-map raster."""
    scene_path = cfg.path("scene")
    if not scene_path:
        raise ConfigError("predict needs paths.scene")
    model = VQVAE.load(cfg.checkpoint_dir)
    scene = read_raster(scene_path)
    amap = scene_anomaly_map(
        model,
        scene,
        stride=cfg.patch_stride,
        mode=mode or cfg.scoring_mode,
        weight=cfg.scoring_weight,
    )
    save_anomaly_map(amap, cfg.anomaly_map_path)
    print(
        f"wrote anomaly map ({amap.provenance}) to {cfg.anomaly_map_path}:"
        f" mean={amap.scores.mean():.6f} max={amap.scores.max():.6f}"
    )


def cmd_postprocess(cfg: RunConfig) -> None:
    """Anomaly map -> final burnt-area mask (+ threshold-search CSV)."""
    scene_path = cfg.path("scene")
    if not scene_path:
        raise ConfigError("postprocess needs paths.scene for the spectral indexes")
    scene = read_raster(scene_path)
    blue = read_raster(cfg.path("blue_band")) if cfg.path("blue_band") else None
    amap = load_anomaly_map(cfg.anomaly_map_path)
    raw_mask = binarize(amap.scores, cfg.binarize_method, cfg.binarize_value)

    thresholds = cfg.thresholds
    if cfg.grids:
        truth_path = cfg.path("ground_truth")
        if not truth_path:
            raise ConfigError("filters.grids given but paths.ground_truth is missing")
        truth = load_mask(truth_path)
        thresholds, table = select_thresholds(
            raw_mask, scene, truth, cfg.grids, valid=scene.valid_mask(), blue=blue
        )
        rows = ["index,threshold,precision,recall,f1"]
        for row in table:
            rows.append(
                ",".join(
                    ["%s" % row["index"]]
                    + ["" if row[k] is None else repr(float(row[k])) for k in ("threshold", "precision", "recall", "f1")]
                )
            )
        atomic_write_bytes(os.path.join(cfg.output_dir, "threshold_search.csv"), ("\n".join(rows) + "\n").encode())

    filtered = apply_index_filters(raw_mask, scene, thresholds, blue=blue)
    final = remove_small_components(filtered, cfg.min_component)
    save_mask(final, cfg.mask_path)
    atomic_write_bytes(
        os.path.join(cfg.output_dir, "thresholds.json"),
        (json.dumps(thresholds.to_dict(), sort_keys=True) + "\n").encode(),
    )
    print(
        f"mask: {int(raw_mask.sum())} raw -> {int(final.sum())} filtered positives"
        f" (thresholds {thresholds.to_dict()})"
    )


def cmd_evaluate(cfg: RunConfig) -> None:
    """Prediction vs ground truth -> metrics JSON/CSV."""
    truth_path = cfg.path("ground_truth")
    if not truth_path:
        raise ConfigError("evaluate needs paths.ground_truth")
    pred = load_mask(cfg.mask_path)
    truth = load_mask(truth_path)
    valid = None
    if cfg.path("scene"):
        valid = read_raster(cfg.path("scene")).valid_mask()
    metrics = evaluate_masks(pred, truth, valid=valid)
    write_metrics_json(metrics, os.path.join(cfg.output_dir, "metrics.json"))
    write_metrics_csv(metrics, os.path.join(cfg.output_dir, "metrics.csv"))
    fmt = lambda v: "undefined" if v is None else f"{v:.4f}"
    print(f"precision={fmt(metrics.precision)} recall={fmt(metrics.recall)} f1={fmt(metrics.f1)}")


def cmd_report(cfg: RunConfig) -> None:
    """Input/reconstruction/alignment triptychs and a mask overlay as PNGs."""
    scene_path = cfg.path("scene")
    if not scene_path:
        raise ConfigError("report needs paths.scene")
    model = VQVAE.load(cfg.checkpoint_dir)
    scene = read_raster(scene_path)
    selected = scene.select_bands(model.cfg.band_roles)
    if model.band_stats is not None:
        from .raster import apply_band_stats

        selected = apply_band_stats(selected, model.band_stats)
    size = model.cfg.input_size
    patchset = extract_patches(selected, size, cfg.patch_stride)
    if cfg.report_positions is not None:
        positions = [(int(r), int(c)) for r, c in cfg.report_positions]
    else:
        positions = patchset.positions[: cfg.report_count]
    report_dir = os.path.join(cfg.output_dir, "report")
    os.makedirs(report_dir, exist_ok=True)
    for row, col in positions:
        if row < 0 or col < 0 or row + size > selected.height or col + size > selected.width:
            raise DataError(f"report patch at ({row}, {col}) does not fit the scene")
        patch = selected.data[:, row : row + size, col : col + size]
        save_png(patch_triptych(model, patch), os.path.join(report_dir, f"triptych_r{row:05d}_c{col:05d}.png"))
    mask_json = str(cfg.mask_path) + ".json"
    if os.path.exists(mask_json):
        mask = load_mask(cfg.mask_path)
        overlay = mask_overlay(false_color(np.clip(selected.data[:3], 0.0, 1.0)), mask)
        save_png(overlay, os.path.join(report_dir, "mask_overlay.png"))
    print(f"wrote {len(positions)} triptych(s) to {report_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scarmap", description="Unsupervised burnt-area extraction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "synth": "generate synthetic benchmark scenes",
        "prepare": "extract normalized training patches from a scene",
        "train": "train the quantized autoencoder on prepared patches",
        "predict": "score a scene into an anomaly map",
        "postprocess": "binarize and filter an anomaly map into a burn mask",
        "evaluate": "compare the final mask against ground truth",
        "report": "emit reconstruction/alignment triptychs and overlays",
    }
    for name, help_text in commands.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the run seed")
        sp.add_argument("--output-dir", default=None, help="override the output directory")
        if name == "train":
            sp.add_argument("--resume", action="store_true", help="continue from the existing checkpoint")
        if name == "predict":
            sp.add_argument("--mode", choices=("am_only", "sm_only", "weighted"), default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, seed=args.seed, output_dir=args.output_dir)
        os.makedirs(cfg.output_dir, exist_ok=True)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "prepare":
            cmd_prepare(cfg)
        elif args.command == "train":
            cmd_train(cfg, resume=args.resume)
        elif args.command == "predict":
            cmd_predict(cfg, mode=args.mode)
        elif args.command == "postprocess":
            cmd_postprocess(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "report":
            cmd_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
