"""Score a burn scene with the trained model and compare AM against SM.

Loads the checkpoint from demo 02 and the burn scene from demo 01, computes
the scene-level alignment map (quantization distance, the default anomaly
score) and the classical reconstruction-error map, and writes heatmaps plus a
reconstruction triptych. The printed contrast ratios show the alignment map
separating burns from vegetation.

Run demos 01 and 02 first:  python demos/03_score_scene.py
"""

import os
import sys

import scarmap as sm
from scarmap.report import heatmap, patch_triptych, save_png

OUT = os.path.join(os.path.dirname(__file__), "output")
checkpoint = os.path.join(OUT, "checkpoint")
scene_path = os.path.join(OUT, "burn_scene")
if not os.path.isdir(checkpoint) or not os.path.exists(scene_path + ".json"):
    sys.exit("run demos/01_synthetic_scenes.py and demos/02_train_model.py first")

model = sm.VQVAE.load(checkpoint)
scene = sm.read_raster(scene_path)
truth = sm.load_mask(os.path.join(OUT, "burn_truth"))

am = sm.scene_anomaly_map(model, scene, stride=16)
sm.save_anomaly_map(am, os.path.join(OUT, "alignment_map"))
save_png(heatmap(am.scores), os.path.join(OUT, "alignment_map.png"))

sm_map = sm.scene_anomaly_map(model, scene, stride=16, mode="sm_only")
save_png(heatmap(sm_map.scores), os.path.join(OUT, "reconstruction_map.png"))

for name, scores in (("alignment map", am.scores), ("reconstruction map", sm_map.scores)):
    burn_mean = scores[truth].mean()
    normal_mean = scores[~truth].mean()
    print(f"{name:18s}  burn mean {burn_mean:.4f}  normal mean {normal_mean:.4f}  ratio {burn_mean / normal_mean:6.1f}x")

# A triptych of the patch with the highest anomaly mass: input patch,
# what the model thinks it should look like, and where the codes disagree.
normalized = sm.apply_band_stats(scene.select_bands(model.cfg.band_roles), model.band_stats)
patchset = sm.extract_patches(normalized, model.cfg.input_size, model.cfg.input_size)
scores = [am.scores[r : r + 64, c : c + 64].sum() for r, c in patchset.positions]
hottest = patchset.patches[scores.index(max(scores))]
save_png(patch_triptych(model, hottest), os.path.join(OUT, "triptych_hottest.png"))
print(f"maps and triptych written under {OUT}/")
