"""Generate synthetic benchmark scenes and look at their spectral behaviour.

Creates one burn-free vegetation scene and one scene with burn scars plus
cloud distractors, saves them in the package raster format, and writes
false-color quicklooks. The printed index statistics show why the
post-processing thresholds work: burns sit low in NDVI and TMBI, clouds sit
very high in TMBI.

Run from the repository root:  python demos/01_synthetic_scenes.py
"""

import os

import numpy as np

import scarmap as sm
from scarmap.report import false_color, save_png

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

# A quiet vegetation scene: the kind of data the model trains on.
normal_spec = sm.SceneSpec(size=(512, 512), seed=1)
normal = sm.generate_normal_scene(normal_spec)
sm.write_raster(normal, os.path.join(OUT, "normal_scene"))

# A post-event scene: three scars with char mottling, plus two bright clouds
# the detector will at first mistake for anomalies (which is the point).
burn_spec = sm.SceneSpec(
    size=(512, 512),
    seed=2,
    n_burns=3,
    burn_radius=(28.0, 48.0),
    burn_multipliers={"NIR": 0.12, "Red": 0.75, "Green": 0.70, "Blue": 0.65},
    burn_texture=1.0,
    n_clouds=2,
    cloud_radius=(24.0, 48.0),
)
burnt, truth = sm.generate_burn_scene(burn_spec)
sm.write_raster(burnt, os.path.join(OUT, "burn_scene"))
sm.save_mask(truth, os.path.join(OUT, "burn_truth"))

save_png(false_color(normal.data[:3]), os.path.join(OUT, "normal_quicklook.png"))
save_png(false_color(burnt.data[:3]), os.path.join(OUT, "burn_quicklook.png"))

ndvi = sm.compute_ndvi(burnt)
tmbi = sm.compute_tmbi(burnt)
clouds = np.any(burnt.data != sm.generate_normal_scene(sm.SceneSpec(size=(512, 512), seed=2)).data, axis=0) & ~truth

print(f"scene size {burnt.height}x{burnt.width}, burn pixels {int(truth.sum())}, cloud pixels {int(clouds.sum())}")
print(f"NDVI  vegetation {ndvi[~truth & ~clouds].mean():+.3f}   burns {ndvi[truth].mean():+.3f}   clouds {ndvi[clouds].mean():+.3f}")
print(f"TMBI  vegetation {tmbi[~truth & ~clouds].mean():.3f}    burns {tmbi[truth].mean():.3f}    clouds {tmbi[clouds].mean():.3f}")
print(f"artifacts in {OUT}/")
