"""Conditional diffusion stage: training loop and T1ce synthesis."""

import copy
import math

import numpy as np
import torch

from .errors import InvalidSteps, ShapeMismatch, TrainingDiverged
from .losses import recon_loss, simple_loss
from .models import Denoiser
from .schedule import (
    build_schedule,
    forward_marginal,
    predict_x0,
    reverse_step,
    strided_timesteps,
)
from .volumes import model_to_unit, z_to_model


def slices_to_tensors(pairs):
    """Stack SlicePairs into model-range torch tensors: cond (N,3,H,W), x0 (N,1,H,W)."""
    cond = torch.from_numpy(np.stack([z_to_model(p.conditioning) for p in pairs]))
    x0 = torch.from_numpy(np.stack([z_to_model(p.target)[None] for p in pairs]))
    return cond, x0


def predict_noise(net, x_t, t, cond):
    """Run the denoiser on a batch; ``t`` may be an int or a (B,) tensor."""
    if x_t.shape[-2:] != cond.shape[-2:]:
        raise ShapeMismatch(f"x_t {tuple(x_t.shape)} vs cond {tuple(cond.shape)}")
    if isinstance(t, int):
        t = torch.full((x_t.shape[0],), t, dtype=torch.long, device=x_t.device)
    return net(x_t, t, cond)


def build_schedule_from_config(sched_cfg):
    return build_schedule(
        sched_cfg["timesteps"], sched_cfg["kind"], sched_cfg["beta_min"], sched_cfg["beta_max"]
    )


def _batch_loss(net, sched, cond, x0, t_idx, noise, gamma, lam1, lam2):
    ab = torch.from_numpy(sched.alpha_bars[t_idx.numpy() - 1]).float().view(-1, 1, 1, 1)
    x_t = torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * noise
    eps_hat = net(x_t, t_idx, cond)
    loss = simple_loss(noise, eps_hat)
    if gamma > 0:
        x0_hat = ((x_t - torch.sqrt(1.0 - ab) * eps_hat) / torch.sqrt(ab)).clamp(-1.0, 1.0)
        loss = loss + gamma * recon_loss((x0_hat + 1) / 2, (x0 + 1) / 2, lam1, lam2)
    return loss


def train_diffusion(train_pairs, val_pairs, cfg, start_state=None, log=print):
    """Train the noise predictor; returns (model, history, best_state).

    ``start_state`` resumes from a loaded checkpoint: a dict with model/optimizer
    state and the epoch to continue from.
    """
    if not train_pairs or not val_pairs:
        raise TrainingDiverged("empty train or validation stream")
    dcfg = cfg.diffusion
    sched = build_schedule(
        cfg.schedule.timesteps, cfg.schedule.kind, cfg.schedule.beta_min, cfg.schedule.beta_max
    )
    torch.manual_seed(cfg.seed)
    net = Denoiser(base_width=dcfg.base_width, levels=dcfg.levels)
    opt = torch.optim.Adam(net.parameters(), lr=dcfg.lr)
    plateau = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=0.5, patience=dcfg.plateau_patience, min_lr=dcfg.min_lr
    )
    start_epoch = 0
    history = []
    if start_state is not None:
        net.load_state_dict(start_state["model"])
        start_state["restore_optimizer"](opt)
        start_epoch = start_state["epoch"]
        history = list(start_state.get("history", []))

    cond_tr, x0_tr = slices_to_tensors(train_pairs)
    cond_va, x0_va = slices_to_tensors(val_pairs)
    n_tr = cond_tr.shape[0]

    # fixed validation corruption so epoch-to-epoch comparisons are stable
    val_gen = torch.Generator().manual_seed(cfg.seed + 1)
    t_va = torch.randint(1, sched.T + 1, (cond_va.shape[0],), generator=val_gen)
    noise_va = torch.randn(x0_va.shape, generator=val_gen)

    gen = torch.Generator().manual_seed(cfg.seed + 2)
    best = {"score": math.inf, "state": None, "epoch": -1}
    stall = 0
    for epoch in range(start_epoch, dcfg.epochs):
        net.train()
        if cfg.augment_prob > 0:
            from .augment import augment

            aug_pairs = [
                augment(p, rng_seed=cfg.seed * 1000003 + epoch * 10007 + j, apply_prob=cfg.augment_prob)
                for j, p in enumerate(train_pairs)
            ]
            cond_ep, x0_ep = slices_to_tensors(aug_pairs)
        else:
            cond_ep, x0_ep = cond_tr, x0_tr
        perm = torch.randperm(n_tr, generator=gen)
        train_loss = 0.0
        n_batches = 0
        for b in range(0, n_tr, dcfg.batch_size):
            idx = perm[b : b + dcfg.batch_size]
            t_idx = torch.randint(1, sched.T + 1, (idx.shape[0],), generator=gen)
            noise = torch.randn((idx.shape[0],) + x0_tr.shape[1:], generator=gen)
            loss = _batch_loss(
                net, sched, cond_ep[idx], x0_ep[idx], t_idx, noise,
                dcfg.recon_weight, dcfg.lambda_bce, dcfg.lambda_dice,
            )
            if not torch.isfinite(loss):
                raise TrainingDiverged("non-finite training loss", epoch=epoch, step=n_batches)
            opt.zero_grad()
            loss.backward()
            opt.step()
            train_loss += float(loss.detach())
            n_batches += 1

        net.eval()
        with torch.no_grad():
            val_loss = 0.0
            nv = 0
            for b in range(0, cond_va.shape[0], dcfg.batch_size):
                sl = slice(b, b + dcfg.batch_size)
                loss = _batch_loss(
                    net, sched, cond_va[sl], x0_va[sl], t_va[sl], noise_va[sl],
                    dcfg.recon_weight, dcfg.lambda_bce, dcfg.lambda_dice,
                )
                val_loss += float(loss.detach()) * (t_va[sl].shape[0])
                nv += t_va[sl].shape[0]
            val_loss /= nv
        plateau.step(val_loss)
        lr = opt.param_groups[0]["lr"]
        history.append(
            {"epoch": epoch, "train_loss": train_loss / max(n_batches, 1), "val_loss": val_loss, "lr": lr}
        )
        log(f"[diffusion] epoch {epoch}: train {train_loss / max(n_batches, 1):.4f} val {val_loss:.4f} lr {lr:.2e}")
        if val_loss < best["score"]:
            best = {"score": val_loss, "state": copy.deepcopy(net.state_dict()), "epoch": epoch}
            stall = 0
        else:
            stall += 1
            if stall >= dcfg.early_stop_patience:
                log(f"[diffusion] early stop at epoch {epoch}")
                break

    net.load_state_dict(best["state"])
    net.eval()
    return net, history, best, opt, sched


def _reverse_jump(x_t, t, t_prev, eps_hat, sched, noise, eta=0.0):
    """Update between (possibly non-adjacent) schedule points.

    With ``eta=1`` and adjacent points this reduces to the single ancestral
    reverse step; with ``eta=0`` the jump is deterministic, which keeps the
    synthesis residual free of sampling noise when striding the schedule.
    """
    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t_prev)
    x0_hat = predict_x0(x_t, t, eps_hat, sched)
    var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev)
    sigma = eta * math.sqrt(max(var, 0.0))
    dir_coef = math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0))
    x = math.sqrt(ab_prev) * x0_hat + dir_coef * eps_hat
    if t_prev > 0 and noise is not None and sigma > 0.0:
        x = x + sigma * noise
    return x


def synthesize_t1ce(net, sched, cond, steps=None, rng_seed=0):
    """Sample the target channel from noise, conditioned on (FLAIR, T1, T2).

    ``cond`` is (B, 3, H, W) or (3, H, W), in the model range [-1, 1]; the
    output matches the batch shape with a single channel, clamped to [-1, 1].
    """
    single = cond.ndim == 3
    cond_t = torch.as_tensor(np.asarray(cond), dtype=torch.float32)
    if single:
        cond_t = cond_t[None]
    steps = sched.T if steps is None else steps
    if not 1 <= steps <= sched.T:
        raise InvalidSteps(f"steps={steps} outside [1, {sched.T}]")

    gen = torch.Generator().manual_seed(rng_seed)
    b, _, h, w = cond_t.shape
    x = torch.randn((b, 1, h, w), generator=gen)
    ts = strided_timesteps(sched.T, steps)
    net.eval()
    with torch.no_grad():
        for i, t in enumerate(ts):
            t_prev = ts[i + 1] if i + 1 < len(ts) else 0
            t_batch = torch.full((b,), t, dtype=torch.long)
            eps_hat = net(x, t_batch, cond_t)
            if steps == sched.T:
                noise = torch.randn(x.shape, generator=gen) if t > 1 else None
                x = reverse_step(x, t, eps_hat, sched, noise)
            else:
                noise = torch.randn(x.shape, generator=gen) if t_prev > 0 else None
                x = _reverse_jump(x, t, t_prev, eps_hat, sched, noise)
    out = x.clamp(-1.0, 1.0).numpy()
    return out[0, 0] if single else out[:, 0]


def synthesize_for_pairs(net, sched, pairs, steps, rng_seed, batch_size=8):
    """Synthesized T1ce (unit domain) for a list of SlicePairs, batched."""
    cond, _ = slices_to_tensors(pairs)
    outs = []
    for b in range(0, cond.shape[0], batch_size):
        chunk = cond[b : b + batch_size]
        synth = synthesize_t1ce(net, sched, chunk.numpy(), steps=steps, rng_seed=rng_seed + b)
        outs.append(synth)
    synth_model = np.concatenate(outs, axis=0)
    return model_to_unit(synth_model)
