"""Static figure emission for qualitative inspection."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _imshow(ax, img, title, cmap="gray"):
    ax.imshow(np.asarray(img), cmap=cmap)
    ax.set_title(title, fontsize=8)
    ax.axis("off")


def synthesis_panel(cond, real_t1ce, synth_t1ce, residual, path):
    """[FLAIR | T1 | T2 | real T1ce | synthesized T1ce | calibrated residual]."""
    fig, axes = plt.subplots(1, 6, figsize=(14, 2.6))
    for ax, img, title in zip(axes[:3], cond, ("FLAIR", "T1", "T2")):
        _imshow(ax, img, title)
    _imshow(axes[3], real_t1ce, "real T1ce")
    _imshow(axes[4], synth_t1ce, "synth T1ce")
    _imshow(axes[5], residual, "residual", cmap="inferno")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def segmentation_panel(image, gt_mask, pred_mask, path):
    """[input | GT mask | predicted mask | overlay]."""
    fig, axes = plt.subplots(1, 4, figsize=(10, 2.6))
    _imshow(axes[0], image, "input")
    _imshow(axes[1], gt_mask, "ground truth")
    _imshow(axes[2], pred_mask, "prediction")
    _imshow(axes[3], image, "overlay")
    overlay = np.zeros(np.asarray(image).shape + (4,))
    overlay[np.asarray(pred_mask) > 0] = (1.0, 0.1, 0.1, 0.45)
    overlay[np.asarray(gt_mask) > 0, 1] = 0.8
    axes[3].imshow(overlay)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def threshold_panel(image, gt_mask, prob_map, taus, path):
    """Input + GT overlay, then the binarized prediction at each threshold."""
    n = 2 + len(taus)
    fig, axes = plt.subplots(1, n, figsize=(2.5 * n, 2.6))
    _imshow(axes[0], image, "input")
    _imshow(axes[1], image, "GT overlay")
    overlay = np.zeros(np.asarray(image).shape + (4,))
    overlay[np.asarray(gt_mask) > 0] = (0.1, 0.9, 0.1, 0.45)
    axes[1].imshow(overlay)
    for ax, tau in zip(axes[2:], taus):
        _imshow(ax, np.asarray(prob_map) >= tau, f"tau = {tau:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
