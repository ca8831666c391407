"""Segmentation stage: residual-fused inputs, training loop, binarization."""

import copy
import math

import numpy as np
import torch

from .errors import InvalidConfig, InvalidThreshold, TrainingDiverged
from .losses import seg_loss
from .metrics import dice
from .models import SegModel
from .residual import (
    assemble_seg_input,
    calibrate_residual,
    compute_residual,
    static_residual,
    zero_residual,
)
from .volumes import model_to_unit, z_to_model


def build_seg_inputs(pairs, residual_source, synth_unit=None, low_pct=1.0, high_pct=99.0):
    """Assemble 4-channel inputs for a list of SlicePairs.

    ``synth_unit`` (N, H, W), unit domain, is required for the dynamic source.
    """
    inputs = []
    for i, p in enumerate(pairs):
        cond_model = z_to_model(p.conditioning)
        real_unit = model_to_unit(z_to_model(p.target))
        if residual_source == "dynamic":
            if synth_unit is None:
                raise InvalidConfig("dynamic residuals need synthesized T1ce")
            raw = compute_residual(real_unit, synth_unit[i])
            res = calibrate_residual(raw, low_pct, high_pct, source="dynamic")
        elif residual_source == "static":
            cond_unit = model_to_unit(cond_model)
            raw = static_residual(cond_unit[0], cond_unit[1], cond_unit[2], real_unit)
            res = calibrate_residual(raw, low_pct, high_pct, source="static")
        elif residual_source == "zero":
            res = zero_residual(p.target.shape)
        else:
            raise InvalidConfig(f"unknown residual source {residual_source!r}")
        inputs.append(
            assemble_seg_input(
                cond_model[0], cond_model[1], cond_model[2], res,
                subject_id=p.subject_id, slice_index=p.slice_index,
            )
        )
    return inputs


def seg_forward(model, x):
    """Probability map for one SegInput or a (B, 4, H, W) batch."""
    arr = x.channels if hasattr(x, "channels") else np.asarray(x)
    single = arr.ndim == 3
    t = torch.as_tensor(arr, dtype=torch.float32)
    if single:
        t = t[None]
    model.eval()
    with torch.no_grad():
        p = model(t).numpy()
    return p[0, 0] if single else p[:, 0]


def binarize(p, tau):
    """Threshold a probability map: pixel = 1 iff p >= tau."""
    if not 0.0 < tau < 1.0:
        raise InvalidThreshold(f"tau={tau} outside (0, 1)")
    return (np.asarray(p) >= tau).astype(np.uint8)


def train_segmentation(train_inputs, train_masks, val_inputs, val_masks, cfg, log=print):
    """Train the segmentation head; early stopping on validation Dice at val_tau."""
    scfg = cfg.segmentation
    if scfg.lambda_bce == 0.0 and scfg.lambda_dice == 0.0:
        raise InvalidConfig("both loss weights zero: no learning signal")
    if not train_inputs or not val_inputs:
        raise TrainingDiverged("empty train or validation stream")

    torch.manual_seed(cfg.seed + 10)
    model = SegModel(base_width=scfg.base_width, levels=scfg.levels)
    opt = torch.optim.Adam(model.parameters(), lr=scfg.lr)
    plateau = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, mode="max", factor=0.5, patience=scfg.plateau_patience, min_lr=scfg.min_lr
    )

    x_tr = torch.from_numpy(np.stack([s.channels for s in train_inputs])).float()
    y_tr = torch.from_numpy(np.stack([m.astype(np.float32) for m in train_masks]))[:, None]
    x_va = torch.from_numpy(np.stack([s.channels for s in val_inputs])).float()
    va_masks = [np.asarray(m, dtype=np.uint8) for m in val_masks]

    gen = torch.Generator().manual_seed(cfg.seed + 11)
    best = {"score": -math.inf, "state": None, "epoch": -1}
    history = []
    stall = 0
    for epoch in range(scfg.epochs):
        model.train()
        if cfg.augment_prob > 0:
            from .augment import augment_channels

            aug = [
                augment_channels(
                    s.channels, np.asarray(m, dtype=np.uint8),
                    rng_seed=cfg.seed * 999983 + epoch * 10007 + j,
                    apply_prob=cfg.augment_prob,
                )
                for j, (s, m) in enumerate(zip(train_inputs, train_masks))
            ]
            x_ep = torch.from_numpy(np.stack([a[0] for a in aug])).float()
            y_ep = torch.from_numpy(np.stack([a[1].astype(np.float32) for a in aug]))[:, None]
        else:
            x_ep, y_ep = x_tr, y_tr
        perm = torch.randperm(x_tr.shape[0], generator=gen)
        train_loss = 0.0
        n_batches = 0
        for b in range(0, x_tr.shape[0], scfg.batch_size):
            idx = perm[b : b + scfg.batch_size]
            y_hat = model(x_ep[idx])
            loss = seg_loss(y_hat, y_ep[idx], scfg.lambda_bce, scfg.lambda_dice)
            if not torch.isfinite(loss):
                raise TrainingDiverged("non-finite training loss", epoch=epoch, step=n_batches)
            opt.zero_grad()
            loss.backward()
            opt.step()
            train_loss += float(loss.detach())
            n_batches += 1

        model.eval()
        with torch.no_grad():
            dices = []
            for b in range(0, x_va.shape[0], scfg.batch_size):
                probs = model(x_va[b : b + scfg.batch_size]).numpy()[:, 0]
                for j, p in enumerate(probs):
                    dices.append(dice(binarize(p, scfg.val_tau), va_masks[b + j]))
            val_dice = float(np.mean(dices))
        plateau.step(val_dice)
        lr = opt.param_groups[0]["lr"]
        history.append(
            {"epoch": epoch, "train_loss": train_loss / max(n_batches, 1), "val_dice": val_dice, "lr": lr}
        )
        log(f"[seg] epoch {epoch}: train {train_loss / max(n_batches, 1):.4f} val dice {val_dice:.4f} lr {lr:.2e}")
        if val_dice > best["score"]:
            best = {"score": val_dice, "state": copy.deepcopy(model.state_dict()), "epoch": epoch}
            stall = 0
        else:
            stall += 1
            if stall >= scfg.early_stop_patience:
                log(f"[seg] early stop at epoch {epoch}")
                break

    model.load_state_dict(best["state"])
    model.eval()
    return model, history, best, opt
