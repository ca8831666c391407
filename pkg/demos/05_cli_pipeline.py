"""The command-line pipeline end to end, at demo scale.

Drives the CLI verbs in their intended order — phantom, preprocess,
train-diffusion, train-seg, evaluate, plot — against a run directory, with
sizes scaled down so the whole chain finishes in a few minutes on CPU. For
the full verification-scale run, use the quick profile without overrides:

    resseg phantom --out runs/demo
    resseg preprocess --out runs/demo
    resseg train-diffusion --out runs/demo
    resseg train-seg --out runs/demo
    resseg evaluate --out runs/demo
    resseg plot --out runs/demo
"""

import os
import sys
import tempfile

from resseg.cli import main

SMALL = [
    "--set", "data.phantom_subjects=8",
    "--set", "data.phantom_shape=[16,48,48]",
    "--set", "data.crop_top=1",
    "--set", "data.crop_bottom=1",
    "--set", "data.height=40",
    "--set", "data.width=40",
    "--set", "schedule.timesteps=100",
    "--set", "diffusion.base_width=16",
    "--set", "diffusion.epochs=15",
    "--set", "diffusion.synth_steps=30",
    "--set", "segmentation.base_width=16",
    "--set", "segmentation.epochs=15",
]

out = os.path.join(tempfile.mkdtemp(prefix="resseg_demo_"), "run")
print(f"run directory: {out}\n")

for verb in ("phantom", "preprocess", "train-diffusion", "train-seg", "evaluate", "plot"):
    print(f"$ resseg {verb} --out {out} ...")
    rc = main([verb, "--out", out, *SMALL])
    if rc != 0:
        sys.exit(rc)
    print()

print(f"done — reports in {out}/eval_dynamic, figures in {out}/plots")
