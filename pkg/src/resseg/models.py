"""Network definitions: conditional noise predictor and the segmentation U-Net."""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch


def timestep_embedding(t, dim):
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half)
    args = t.float()[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    """Two 3x3 convs with group norm; optional additive timestep conditioning."""

    def __init__(self, in_ch, out_ch, time_dim=None):
        super().__init__()
        groups = min(8, out_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm1 = nn.GroupNorm(groups, out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, out_ch)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()
        self.time_proj = nn.Linear(time_dim, out_ch) if time_dim else None

    def forward(self, x, temb=None):
        h = F.silu(self.norm1(self.conv1(x)))
        if self.time_proj is not None and temb is not None:
            h = h + self.time_proj(temb)[:, :, None, None]
        h = F.silu(self.norm2(self.conv2(h)))
        return h + self.skip(x)


class SelfAttention2d(nn.Module):
    """Single-head self-attention over spatial positions."""

    def __init__(self, ch):
        super().__init__()
        self.norm = nn.GroupNorm(min(8, ch), ch)
        self.qkv = nn.Conv2d(ch, 3 * ch, 1)
        self.proj = nn.Conv2d(ch, ch, 1)

    def forward(self, x):
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(1)
        attn = torch.softmax(q.transpose(1, 2) @ k / math.sqrt(c), dim=-1)
        out = (v @ attn.transpose(1, 2)).reshape(b, c, h, w)
        return x + self.proj(out)


class Denoiser(nn.Module):
    """Noise-prediction encoder-decoder.

    Input is the noisy target channel concatenated with the 3 conditioning
    channels (4 channels total); output is the predicted noise (1 channel).
    Self-attention runs at the lowest resolution only.
    """

    def __init__(self, base_width=32, levels=3, in_channels=4):
        super().__init__()
        self.base_width = base_width
        self.levels = levels
        time_dim = base_width * 4
        self.time_mlp = nn.Sequential(
            nn.Linear(base_width, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )
        widths = [base_width * 2**i for i in range(levels)]
        self.stem = nn.Conv2d(in_channels, widths[0], 3, padding=1)
        self.down = nn.ModuleList(
            ResBlock(widths[max(i - 1, 0)], widths[i], time_dim) for i in range(levels)
        )
        self.mid = ResBlock(widths[-1], widths[-1], time_dim)
        self.mid_attn = SelfAttention2d(widths[-1])
        self.up = nn.ModuleList(
            ResBlock(widths[i] + widths[i], widths[max(i - 1, 0)], time_dim)
            for i in reversed(range(levels))
        )
        self.head = nn.Conv2d(widths[0], 1, 3, padding=1)

    def forward(self, x_t, t, cond):
        """x_t: (B,1,H,W), t: (B,) int timesteps, cond: (B,3,H,W)."""
        if x_t.shape[-2:] != cond.shape[-2:] or cond.shape[1] != 3:
            raise ShapeMismatch(
                f"conditioning shape {tuple(cond.shape)} incompatible with x_t {tuple(x_t.shape)}"
            )
        temb = self.time_mlp(timestep_embedding(t, self.base_width))
        h = self.stem(torch.cat([x_t, cond], dim=1))
        skips = []
        for i, block in enumerate(self.down):
            if i > 0:
                h = F.avg_pool2d(h, 2)
            h = block(h, temb)
            skips.append(h)
        h = self.mid_attn(self.mid(h, temb))
        for i, block in enumerate(self.up):
            h = block(torch.cat([h, skips[-(i + 1)]], dim=1), temb)
            if i < self.levels - 1:
                h = F.interpolate(h, size=skips[-(i + 2)].shape[-2:], mode="nearest")
        return self.head(h)


class SegModel(nn.Module):
    """U-shaped segmentation head: 4 input channels, sigmoid probability output."""

    def __init__(self, base_width=32, levels=4, in_channels=4, max_width_factor=4):
        super().__init__()
        self.levels = levels
        # cap channel growth to keep the head lightweight (< 2M params at defaults)
        widths = [min(base_width * 2**i, base_width * max_width_factor) for i in range(levels)]
        self.enc = nn.ModuleList(
            ResBlock(in_channels if i == 0 else widths[i - 1], widths[i]) for i in range(levels)
        )
        self.bottleneck = ResBlock(widths[-1], widths[-1])
        self.dec = nn.ModuleList(
            ResBlock(widths[i] + widths[i], widths[max(i - 1, 0)]) for i in reversed(range(levels))
        )
        self.head = nn.Conv2d(widths[0], 1, 1)

    def forward(self, x):
        if x.shape[1] != 4:
            raise ShapeMismatch(f"expected 4 input channels, got {x.shape[1]}")
        h = x
        skips = []
        for i, block in enumerate(self.enc):
            if i > 0:
                h = F.avg_pool2d(h, 2)
            h = block(h)
            skips.append(h)
        h = self.bottleneck(h)
        for i, block in enumerate(self.dec):
            h = block(torch.cat([h, skips[-(i + 1)]], dim=1))
            if i < self.levels - 1:
                h = F.interpolate(h, size=skips[-(i + 2)].shape[-2:], mode="nearest")
        return torch.sigmoid(self.head(h))


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())
