"""Training the conditional diffusion stage and inspecting its residuals.

Trains a deliberately small denoiser on a handful of phantom subjects (a few
minutes on CPU), synthesizes the target modality for a held-out subject, and
shows that the calibrated synthesis residual concentrates inside the tumor —
the premise the segmentation stage builds on.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from resseg.config import load_config
from resseg.diffusion import synthesize_for_pairs, train_diffusion
from resseg.phantom import generate_phantom_dataset
from resseg.residual import calibrate_residual, compute_residual
from resseg.volumes import clip_and_normalize, filter_slices, model_to_unit, z_to_model

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

# --- 1. a small training run -------------------------------------------------
cfg = load_config(
    profile="quick",
    overrides={
        "schedule": {"timesteps": 100},
        "diffusion": {"base_width": 16, "epochs": 12, "synth_steps": 30},
        "augment_prob": 0.0,
    },
)

volumes = generate_phantom_dataset(8, shape=(14, 48, 48), rng_seed=5)
slices = {v.subject_id: filter_slices(clip_and_normalize(v)) for v in volumes}
train_ids = sorted(slices)[:6]
val_ids = sorted(slices)[6:7]
test_ids = sorted(slices)[7:]
train_pairs = [p for sid in train_ids for p in slices[sid]]
val_pairs = [p for sid in val_ids for p in slices[sid]]
print(f"training on {len(train_pairs)} slices, validating on {len(val_pairs)}")

net, history, best, _, sched = train_diffusion(train_pairs, val_pairs, cfg)
print(f"best validation loss {best['score']:.4f} at epoch {best['epoch']}")

# --- 2. synthesis on a held-out subject --------------------------------------
test_pairs = slices[test_ids[0]]
synth = synthesize_for_pairs(net, sched, test_pairs, cfg.diffusion.synth_steps, rng_seed=0)

k = len(test_pairs) // 2
pair = test_pairs[k]
real_unit = model_to_unit(z_to_model(pair.target))
res = calibrate_residual(compute_residual(real_unit, synth[k]))

mask = pair.mask.astype(bool)
inside = res.values[mask].mean()
outside = res.values[~mask].mean()
print(f"calibrated residual: inside tumor {inside:.3f}, outside {outside:.3f} "
      f"(ratio {inside / outside:.1f}x)")

fig, axes = plt.subplots(1, 4, figsize=(12, 3))
panels = [real_unit, synth[k], res.values, pair.mask]
titles = ["real T1ce", "synthesized T1ce", "calibrated residual", "ground truth"]
for ax, img, title in zip(axes, panels, titles):
    ax.imshow(img, cmap="gray" if title != "calibrated residual" else "magma")
    ax.set_title(title)
    ax.axis("off")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "synthesis_residual.png"), dpi=120)
print(f"figures written to {OUT}")
