"""Noise schedules and the forward corruption process.

Builds the linear and cosine schedules, plots their cumulative signal decay,
and corrupts one phantom slice at a few timesteps to show what the denoiser
is trained to invert. Writes figures next to this script.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from resseg.phantom import generate_phantom_dataset
from resseg.schedule import build_schedule, forward_marginal
from resseg.volumes import clip_and_normalize, filter_slices, z_to_model

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

# --- 1. schedule tables ----------------------------------------------------
# The linear schedule is the pipeline default; cosine decays more gently at
# the start and is available behind config.
T = 1000
linear = build_schedule(T, "linear", 1e-4, 0.02)
cosine = build_schedule(T, "cosine")

fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(np.arange(1, T + 1), linear.alpha_bars, label="linear(1e-4, 0.02)")
ax.plot(np.arange(1, T + 1), cosine.alpha_bars, label="cosine")
ax.set_xlabel("timestep t")
ax.set_ylabel(r"cumulative signal fraction $\bar\alpha_t$")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(OUT, "schedule_alpha_bars.png"), dpi=120)
print(f"alpha_bar at T: linear {linear.alpha_bar(T):.2e}, cosine {cosine.alpha_bar(T):.2e}")

# --- 2. forward corruption of a real slice ---------------------------------
vol = clip_and_normalize(generate_phantom_dataset(1, shape=(16, 64, 64), rng_seed=3)[0])
pair = filter_slices(vol)[2]
x0 = z_to_model(pair.target)

rng = np.random.default_rng(0)
steps = [1, 50, 250, 1000]
fig, axes = plt.subplots(1, len(steps) + 1, figsize=(3 * (len(steps) + 1), 3))
axes[0].imshow(x0, cmap="gray", vmin=-1, vmax=1)
axes[0].set_title("x0 (clean)")
for ax, t in zip(axes[1:], steps):
    x_t = forward_marginal(x0, t, linear, rng.standard_normal(x0.shape))
    ax.imshow(x_t, cmap="gray", vmin=-2, vmax=2)
    ax.set_title(f"t = {t}")
for ax in axes:
    ax.axis("off")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "forward_corruption.png"), dpi=120)
print(f"figures written to {OUT}")
