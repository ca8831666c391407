"""Volume-level data types and the preprocessing recipe.

Pipeline order: load -> clip_and_normalize -> crop_axial -> resize_slices ->
filter_slices. All steps are pure functions; the returned volumes are new
objects.
"""

import os
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from . import nifti
from .errors import (
    DegenerateIntensity,
    EmptyCrop,
    InsufficientSubjects,
    MissingModality,
    ShapeMismatch,
)

MODALITIES = ("FLAIR", "T1", "T2", "T1ce")
CONDITIONING = ("FLAIR", "T1", "T2")
TARGET = "T1ce"

# z-scored intensities are squashed to the model range [-1, 1] by x / Z_LIMIT
Z_LIMIT = 3.0


@dataclass
class MriVolume:
    subject_id: str
    modalities: dict
    mask: np.ndarray
    voxel_spacing: tuple
    slice_offset: int = 0  # original index of axial slice 0 after cropping

    def __post_init__(self):
        shapes = {m: v.shape for m, v in self.modalities.items()}
        shapes["mask"] = self.mask.shape
        if len(set(shapes.values())) != 1:
            raise ShapeMismatch(f"{self.subject_id}: inconsistent grid shapes {shapes}")
        vals = np.unique(self.mask)
        if not np.all(np.isin(vals, (0, 1))):
            raise ShapeMismatch(f"{self.subject_id}: mask must be binary, found values {vals[:5]}")
        if any(s <= 0 for s in self.voxel_spacing):
            raise ShapeMismatch(f"{self.subject_id}: voxel spacing must be positive")

    @property
    def shape(self):
        return self.mask.shape


@dataclass
class SlicePair:
    """One preprocessed 2D sample: 3 conditioning channels, target channel, mask."""

    conditioning: np.ndarray  # (3, H, W) float32
    target: np.ndarray  # (H, W) float32
    mask: np.ndarray  # (H, W) uint8
    subject_id: str
    slice_index: int

    def __post_init__(self):
        if self.conditioning.shape != (3,) + self.target.shape or self.target.shape != self.mask.shape:
            raise ShapeMismatch(
                f"{self.subject_id}[{self.slice_index}]: channel shapes disagree"
            )


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    seed: int

    def all_ids(self):
        return self.train + self.val + self.test


def load_volume(path, subject_id=None):
    """Load one subject directory: ``<subject>_<modality>.nii.gz`` + ``<subject>_seg.nii.gz``."""
    subject_id = subject_id or os.path.basename(os.path.normpath(path))
    arrays = {}
    spacing = None
    for mod in MODALITIES:
        fp = _find_file(path, f"{subject_id}_{mod}")
        if fp is None:
            raise MissingModality(mod, path)
        arrays[mod], spacing = nifti.read_volume(fp)
    seg_fp = _find_file(path, f"{subject_id}_seg")
    if seg_fp is None:
        raise MissingModality("seg", path)
    seg, _ = nifti.read_volume(seg_fp)
    mask = (seg > 0).astype(np.uint8)

    ref_shape = arrays[MODALITIES[0]].shape
    for name, arr in list(arrays.items()) + [("mask", mask)]:
        if arr.shape != ref_shape:
            raise ShapeMismatch(
                f"{subject_id}: {name} shaped {arr.shape} against {ref_shape}"
            )
    return MriVolume(subject_id, arrays, mask, spacing)


def _find_file(path, stem):
    for ext in (".nii.gz", ".nii"):
        fp = os.path.join(path, stem + ext)
        if os.path.exists(fp):
            return fp
    return None


def clip_and_normalize(vol, low_pct=1.0, high_pct=99.0):
    """Percentile-clip and z-score each modality over its nonzero (brain) voxels.

    Background zeros stay exactly zero; the mask is untouched.
    """
    out = {}
    for mod, arr in vol.modalities.items():
        arr = arr.astype(np.float64)
        nz = arr != 0
        if not nz.any():
            raise DegenerateIntensity(f"{vol.subject_id}/{mod}: all-zero modality")
        vals = arr[nz]
        p_lo, p_hi = np.percentile(vals, [low_pct, high_pct])
        clipped = np.clip(vals, p_lo, p_hi)
        mu = clipped.mean()
        sd = clipped.std()
        if sd == 0:
            raise DegenerateIntensity(f"{vol.subject_id}/{mod}: constant intensity")
        norm = np.zeros_like(arr, dtype=np.float32)
        norm[nz] = ((clipped - mu) / sd).astype(np.float32)
        out[mod] = norm
    return replace(vol, modalities=out, mask=vol.mask.copy())


def crop_axial(vol, discard_top=26, discard_bottom=80):
    """Drop the top/bottom axial slices where tumor presence is rare."""
    depth = vol.shape[0]
    if depth <= discard_top + discard_bottom:
        raise EmptyCrop(
            f"{vol.subject_id}: depth {depth} <= discard {discard_top}+{discard_bottom}"
        )
    sl = slice(discard_top, depth - discard_bottom)
    return replace(
        vol,
        modalities={m: a[sl].copy() for m, a in vol.modalities.items()},
        mask=vol.mask[sl].copy(),
        slice_offset=vol.slice_offset + discard_top,
    )


def resize_slices(vol, height=120, width=120):
    """Resize every axial slice: bilinear for images, nearest for the mask."""
    if vol.shape[1:] == (height, width):
        return replace(vol, modalities={m: a.copy() for m, a in vol.modalities.items()}, mask=vol.mask.copy())

    def _resize(stack, interp):
        return np.stack(
            [cv2.resize(s, (width, height), interpolation=interp) for s in stack]
        )

    mods = {m: _resize(a.astype(np.float32), cv2.INTER_LINEAR) for m, a in vol.modalities.items()}
    mask = _resize(vol.mask, cv2.INTER_NEAREST).astype(np.uint8)
    return replace(vol, modalities=mods, mask=mask)


def filter_slices(vol):
    """Emit one SlicePair per axial slice whose mask has at least one positive pixel."""
    pairs = []
    for k in range(vol.shape[0]):
        if vol.mask[k].any():
            cond = np.stack([vol.modalities[m][k] for m in CONDITIONING]).astype(np.float32)
            pairs.append(
                SlicePair(
                    conditioning=cond,
                    target=vol.modalities[TARGET][k].astype(np.float32),
                    mask=vol.mask[k].astype(np.uint8),
                    subject_id=vol.subject_id,
                    slice_index=vol.slice_offset + k,
                )
            )
    return pairs


def all_slices(vol):
    """Like filter_slices but keeps tumor-free slices too (evaluation-time option)."""
    pairs = []
    for k in range(vol.shape[0]):
        cond = np.stack([vol.modalities[m][k] for m in CONDITIONING]).astype(np.float32)
        pairs.append(
            SlicePair(
                conditioning=cond,
                target=vol.modalities[TARGET][k].astype(np.float32),
                mask=vol.mask[k].astype(np.uint8),
                subject_id=vol.subject_id,
                slice_index=vol.slice_offset + k,
            )
        )
    return pairs


def split_dataset(ids, ratios=(0.8, 0.1, 0.1), seed=0):
    """Deterministic shuffle + partition of subject ids into train/val/test."""
    if len(set(ids)) != len(ids):
        raise InsufficientSubjects("duplicate subject ids")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InsufficientSubjects(f"ratios must sum to 1, got {ratios}")
    n = len(ids)
    n_nonzero = sum(1 for r in ratios if r > 0)
    if n < n_nonzero:
        raise InsufficientSubjects(f"{n} subjects cannot fill {n_nonzero} partitions")

    order = list(ids)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)

    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    # keep every nonzero partition nonempty
    if ratios[0] > 0:
        n_train = max(n_train, 1)
    if ratios[1] > 0:
        n_val = max(n_val, 1)
    n_test = n - n_train - n_val
    if ratios[2] > 0 and n_test < 1:
        n_train -= 1
        n_test += 1
    if min(n_train, n_val, n_test) < 0:
        raise InsufficientSubjects(f"cannot split {n} subjects with ratios {ratios}")
    return DatasetSplit(
        train=order[:n_train],
        val=order[n_train : n_train + n_val],
        test=order[n_train + n_val :],
        seed=seed,
    )


def z_to_model(x, z_limit=Z_LIMIT):
    """Map z-scored intensities into the model range [-1, 1]."""
    return np.clip(np.asarray(x, dtype=np.float32) / z_limit, -1.0, 1.0)


def model_to_unit(x):
    """Affine map from the model range [-1, 1] to [0, 1]."""
    return (x + 1.0) / 2.0
