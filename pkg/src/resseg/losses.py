"""Training losses: simplified noise-matching MSE and the BCE + soft-Dice compounds."""

import torch

from .errors import RangeViolation, ShapeMismatch

BCE_EPS = 1e-7  # clamp for log terms
DICE_SMOOTH = 1.0


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def simple_loss(eps, eps_hat):
    """Mean squared error between true and predicted noise."""
    _check_shapes(eps, eps_hat)
    return torch.mean((eps - eps_hat) ** 2)


def bce(pred, target):
    """Pixel-mean binary cross-entropy with probabilities clamped away from {0, 1}."""
    _check_shapes(pred, target)
    p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def soft_dice(pred, target, smooth=DICE_SMOOTH):
    """Differentiable Dice overlap in [0, 1]; smoothing keeps empty masks defined."""
    _check_shapes(pred, target)
    inter = (pred * target).sum()
    return (2.0 * inter + smooth) / (pred.sum() + target.sum() + smooth)


def _check_unit_range(name, x, tol=1e-6):
    vals = x.detach()
    lo = float(vals.min())
    hi = float(vals.max())
    if lo < -tol or hi > 1.0 + tol:
        raise RangeViolation(f"{name} outside [0, 1]: min={lo:.3g}, max={hi:.3g}")


def recon_loss(x0_hat, x0, lam1=0.5, lam2=0.5):
    """Hybrid reconstruction loss lam1*BCE + lam2*(1 - Dice) on [0,1]-valued images."""
    _check_shapes(x0_hat, x0)
    _check_unit_range("x0_hat", x0_hat)
    _check_unit_range("x0", x0)
    return lam1 * bce(x0_hat, x0) + lam2 * (1.0 - soft_dice(x0_hat, x0))


def seg_loss(y_hat, y, lam1=0.5, lam2=0.5):
    """Compound segmentation loss lam1*BCE + lam2*(1 - Dice) against a binary mask."""
    _check_shapes(y_hat, y)
    _check_unit_range("y_hat", y_hat)
    uniq = torch.unique(y)
    if not torch.all((uniq == 0) | (uniq == 1)):
        raise RangeViolation("ground-truth mask must be binary")
    return lam1 * bce(y_hat, y.to(y_hat.dtype)) + lam2 * (1.0 - soft_dice(y_hat, y.to(y_hat.dtype)))
