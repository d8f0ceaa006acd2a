"""Train the quantized autoencoder on normal vegetation patches.

Builds 200 training patches from two burn-free scenes, fits per-band minmax
normalization on the first scene, trains a small model for 30 epochs, and
saves a checkpoint the later demos reuse. Prints the three loss terms every
few epochs so you can watch the codebook lock onto the vegetation textures
(the regularization and alignment terms collapse once it does).

Run from the repository root:  python demos/02_train_model.py   (~30 s CPU)
"""

import os

import numpy as np

import scarmap as sm

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

stacks = []
stats = None
for i, seed in enumerate((101, 102)):
    scene = sm.generate_normal_scene(sm.SceneSpec(size=(704, 704), seed=seed))
    selected = scene.select_bands(("NIR", "Red", "Green"))
    if i == 0:
        normalized, stats = sm.normalize(selected, method="minmax")
    else:
        normalized = sm.apply_band_stats(selected, stats)  # never re-fit on new scenes
    stacks.append(sm.extract_patches(normalized, 64, 64).patches)
patches = np.concatenate(stacks)[:200]
print(f"training on {patches.shape[0]} patches of {patches.shape[2]}x{patches.shape[3]} px")

cfg = sm.toy_config(epochs=30, seed=0)


def progress(epoch, lb):
    if epoch % 5 == 0 or epoch == cfg.epochs - 1:
        print(
            f"epoch {epoch:3d}  total {lb.total:.4f}  rec {lb.reconstruction:.4f}"
            f"  reg {lb.regularization:.4f}  align {lb.alignment:.5f}"
        )


model, history = sm.train(patches, cfg, band_stats=stats, on_epoch=progress)

active = int(np.count_nonzero(model.codebook_usage[-1]))
print(f"codebook: {active}/{cfg.codebook_size} codes active in the final epoch")

model.save(os.path.join(OUT, "checkpoint"))
sm.save_history_csv(history, os.path.join(OUT, "loss_history.csv"))
print(f"checkpoint and loss history saved under {OUT}/")
