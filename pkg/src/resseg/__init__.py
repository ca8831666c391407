"""Two-stage residual-guided brain tumor segmentation.

Stage 1 synthesizes the contrast-enhanced T1 (T1ce) modality from FLAIR, T1
and T2 with a conditional denoising diffusion model; stage 2 feeds the
calibrated synthesis residual, fused with the observed modalities, into a
lightweight 2D U-Net that predicts the whole-tumor mask.
"""

from .metrics import dice, iou, threshold_sweep
from .residual import assemble_seg_input, calibrate_residual, compute_residual, static_residual
from .schedule import (
    build_schedule,
    forward_marginal,
    forward_step,
    predict_x0,
    reverse_step,
)
from .volumes import (
    clip_and_normalize,
    crop_axial,
    filter_slices,
    load_volume,
    resize_slices,
    split_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "build_schedule",
    "forward_step",
    "forward_marginal",
    "predict_x0",
    "reverse_step",
    "compute_residual",
    "calibrate_residual",
    "static_residual",
    "assemble_seg_input",
    "dice",
    "iou",
    "threshold_sweep",
    "load_volume",
    "clip_and_normalize",
    "crop_axial",
    "resize_slices",
    "filter_slices",
    "split_dataset",
]
