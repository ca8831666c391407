"""Residual attention priors: raw synthesis error, calibration, channel fusion.

Residuals are computed in the unit intensity domain ([-1, 1] model range
mapped to [0, 1] first) so the dynamic and static variants share a scale.
"""

from dataclasses import dataclass

import numpy as np

from .errors import RangeViolation, ShapeMismatch


@dataclass
class ResidualMap:
    values: np.ndarray  # (H, W) in [0, 1]
    low_pct: float
    high_pct: float
    raw_min: float
    raw_max: float
    source: str  # "dynamic" | "static" | "zero"
    constant: bool = False  # set when the raw residual had no dynamic range


@dataclass
class SegInput:
    """Four-channel segmentation input in the fixed order (FLAIR, T1, T2, residual)."""

    channels: np.ndarray  # (4, H, W)
    subject_id: str = ""
    slice_index: int = -1
    residual_source: str = "dynamic"


def compute_residual(real_t1ce, synth_t1ce):
    """Raw per-pixel absolute synthesis error |synth - real|."""
    real_t1ce = np.asarray(real_t1ce)
    synth_t1ce = np.asarray(synth_t1ce)
    if real_t1ce.shape != synth_t1ce.shape:
        raise ShapeMismatch(f"{real_t1ce.shape} vs {synth_t1ce.shape}")
    return np.abs(synth_t1ce - real_t1ce)


def static_residual(flair, t1, t2, real_t1ce):
    """Ablation baseline: absolute difference of T1ce against the conditioning mean."""
    arrs = [np.asarray(a) for a in (flair, t1, t2, real_t1ce)]
    if len({a.shape for a in arrs}) != 1:
        raise ShapeMismatch(f"input shapes differ: {[a.shape for a in arrs]}")
    proxy = (arrs[0] + arrs[1] + arrs[2]) / 3.0
    return np.abs(arrs[3] - proxy)


def calibrate_residual(raw, low_pct=1.0, high_pct=99.0, source="dynamic"):
    """Percentile-clip the raw residual and min-max normalize it into [0, 1]."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size and float(raw.min()) < 0:
        raise RangeViolation(f"raw residual contains negative values (min {raw.min():.3g})")
    p_lo, p_hi = np.percentile(raw, [low_pct, high_pct])
    if p_hi <= p_lo:
        return ResidualMap(
            values=np.zeros_like(raw, dtype=np.float32),
            low_pct=low_pct,
            high_pct=high_pct,
            raw_min=float(raw.min()),
            raw_max=float(raw.max()),
            source=source,
            constant=True,
        )
    clipped = np.clip(raw, p_lo, p_hi)
    values = ((clipped - p_lo) / (p_hi - p_lo)).astype(np.float32)
    return ResidualMap(
        values=values,
        low_pct=low_pct,
        high_pct=high_pct,
        raw_min=float(raw.min()),
        raw_max=float(raw.max()),
        source=source,
    )


def zero_residual(shape):
    """Prior used when no real T1ce is available at inference (documented fallback)."""
    return ResidualMap(
        values=np.zeros(shape, dtype=np.float32),
        low_pct=0.0,
        high_pct=100.0,
        raw_min=0.0,
        raw_max=0.0,
        source="zero",
        constant=True,
    )


def assemble_seg_input(flair, t1, t2, residual, subject_id="", slice_index=-1):
    """Channel-wise concatenation (FLAIR, T1, T2, residual)."""
    arrs = [np.asarray(a, dtype=np.float32) for a in (flair, t1, t2)]
    res = residual.values.astype(np.float32)
    if len({a.shape for a in arrs} | {res.shape}) != 1:
        raise ShapeMismatch(
            f"channel shapes differ: {[a.shape for a in arrs]} + residual {res.shape}"
        )
    return SegInput(
        channels=np.stack(arrs + [res]),
        subject_id=subject_id,
        slice_index=slice_index,
        residual_source=residual.source,
    )
