"""Slice-level training augmentation.

Transform families: horizontal flip, rotation (<= 15 deg), affine
(scale in [0.9, 1.1], shift <= 5%), brightness/contrast (+-20%). Each family
fires independently with the configured probability. Geometric transforms hit
the conditioning channels, the target and the mask with the same spatial map;
photometric ones touch image channels only. Fully deterministic per seed.
"""

from dataclasses import replace

import cv2
import numpy as np

MAX_ROTATION_DEG = 15.0
SCALE_RANGE = (0.9, 1.1)
MAX_SHIFT_FRAC = 0.05
BRIGHTNESS_DELTA = 0.2
CONTRAST_DELTA = 0.2
CHANNEL_BRIGHTNESS_DELTA = 0.3


def _sample_params(rng, apply_prob):
    params = {
        "flip": rng.random() < apply_prob,
        "angle": 0.0,
        "scale": 1.0,
        "shift": (0.0, 0.0),
        "brightness": 0.0,
        "contrast": 1.0,
    }
    if rng.random() < apply_prob:
        params["angle"] = float(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    if rng.random() < apply_prob:
        params["scale"] = float(rng.uniform(*SCALE_RANGE))
        params["shift"] = (
            float(rng.uniform(-MAX_SHIFT_FRAC, MAX_SHIFT_FRAC)),
            float(rng.uniform(-MAX_SHIFT_FRAC, MAX_SHIFT_FRAC)),
        )
    if rng.random() < apply_prob:
        params["brightness"] = float(rng.uniform(-BRIGHTNESS_DELTA, BRIGHTNESS_DELTA))
    if rng.random() < apply_prob:
        params["contrast"] = float(rng.uniform(1.0 - CONTRAST_DELTA, 1.0 + CONTRAST_DELTA))
    return params


def _warp_matrix(params, h, w):
    mat = cv2.getRotationMatrix2D((w / 2 - 0.5, h / 2 - 0.5), params["angle"], params["scale"])
    mat[0, 2] += params["shift"][1] * w
    mat[1, 2] += params["shift"][0] * h
    return mat


def apply_spatial(image, params, is_mask=False):
    """Apply the sampled geometric map to one 2D channel."""
    if params["angle"] == 0.0 and params["scale"] == 1.0 and params["shift"] == (0.0, 0.0):
        warped = image
    else:
        h, w = image.shape
        interp = cv2.INTER_NEAREST if is_mask else cv2.INTER_LINEAR
        warped = cv2.warpAffine(
            image.astype(np.float32), _warp_matrix(params, h, w), (w, h), flags=interp, borderValue=0.0
        )
    if params["flip"]:
        warped = warped[:, ::-1]
    return np.ascontiguousarray(warped)


def augment_channels(channels, mask, rng_seed, apply_prob=0.4, photometric_channels=3):
    """Augment a (C, H, W) stack plus mask; photometric changes hit the first
    ``photometric_channels`` channels only (e.g. spare an attention-map channel)."""
    if not 0.0 <= apply_prob <= 1.0:
        raise ValueError(f"apply_prob must be in [0, 1], got {apply_prob}")
    rng = np.random.default_rng(rng_seed)
    params = _sample_params(rng, apply_prob)
    out = np.stack([apply_spatial(c, params) for c in channels])
    m = apply_spatial(mask.astype(np.float32), params, is_mask=True)
    out[:photometric_channels] = out[:photometric_channels] * params["contrast"] + params["brightness"]
    # independent per-channel level jitter, mimicking per-sequence scanner
    # variation; keeps the model from anchoring on absolute channel levels
    if rng.random() < apply_prob:
        deltas = rng.uniform(-CHANNEL_BRIGHTNESS_DELTA, CHANNEL_BRIGHTNESS_DELTA, size=photometric_channels)
        out[:photometric_channels] += deltas[:, None, None].astype(np.float32)
    return out.astype(np.float32), (m > 0.5).astype(np.uint8)


def augment(sp, rng_seed, apply_prob=0.4):
    """Return an augmented copy of a SlicePair; identity when apply_prob == 0."""
    if not 0.0 <= apply_prob <= 1.0:
        raise ValueError(f"apply_prob must be in [0, 1], got {apply_prob}")
    rng = np.random.default_rng(rng_seed)
    params = _sample_params(rng, apply_prob)

    cond = np.stack([apply_spatial(c, params) for c in sp.conditioning])
    target = apply_spatial(sp.target, params)
    mask = apply_spatial(sp.mask.astype(np.float32), params, is_mask=True)

    # photometric changes on image channels only
    cond = cond * params["contrast"] + params["brightness"]
    target = target * params["contrast"] + params["brightness"]

    return replace(
        sp,
        conditioning=cond.astype(np.float32),
        target=target.astype(np.float32),
        mask=(mask > 0.5).astype(np.uint8),
    )
