"""Synthetic phantom subjects with analytically known tumor geometry.

Each phantom has shared smooth "anatomy" fields rendered into the four
modalities with different gains, plus an ellipsoidal tumor blob. The blob is
faintly visible in the conditioning modalities, but only in the target does
it enhance, and the enhancement carries a random per-subject gain plus a
random spatial texture drawn independently of the conditioning channels:
cross-modal synthesis can learn the anatomy, yet the enhancement itself
stays unpredictable and the synthesis residual remains informative inside
the tumor.
"""

from dataclasses import dataclass

import numpy as np

from .volumes import MriVolume

# additive blob contrast per conditioning modality
BLOB_CONTRAST = {"FLAIR": 0.010, "T1": 0.004, "T2": 0.007}
TARGET_CONTRAST = 1.0
# enhancement = (base gain + texture spread * random field) * profile;
# the base gain is drawn per subject, the texture field per voxel, and
# neither appears in the conditioning channels, so no predictor of the
# target from the conditioning can reproduce the enhancement
ENHANCEMENT_GAIN = (0.9, 1.1)
ENHANCEMENT_TEXTURE = 0.15


# two shared anatomy fields A and B rendered with modality-specific weights:
# (offset, gain on A, gain on B). The target background depends on B through
# a non-monotone fold (2|B| - 1): a pointwise function of the conditioning
# channels (cross-modal synthesis can reconstruct it) that no linear
# combination of the conditioning channels can express, so subtraction-style
# proxies for the target mispredict the background in a structured way.
MODALITY_MIX = {
    "FLAIR": (1.00, 0.15, 0.11),
    "T1": (0.90, 0.11, -0.09),
    "T2": (1.10, 0.13, 0.05),
    "T1ce": (0.95, 0.12, 0.22),
}
# acquisition noise: the conditioning modalities are noisier than the target,
# as synthesis averages it out while subtraction proxies propagate it
CONDITIONING_NOISE = 0.05
TARGET_NOISE = 0.02
# dark edema-like shell around the blob, conditioning modalities only:
# outer extent relative to the tumor radii, and per-subject depth range
HALO_SCALE = 1.6
HALO_DEPTH = (0.20, 0.30)


@dataclass(frozen=True)
class PhantomTruth:
    """Analytic ground truth for one phantom subject."""

    tumor_center: tuple
    tumor_radii: tuple  # semi-axes in voxels, (D, H, W) order
    enhancement_gain: float

    def ellipsoid_voxel_count(self, shape):
        r2 = _ellipsoid_r2(shape, self.tumor_center, self.tumor_radii)
        return int((r2 <= 1.0).sum())

    def axial_extent(self, shape):
        """Number of axial slices intersected by the ellipsoid."""
        r2 = _ellipsoid_r2(shape, self.tumor_center, self.tumor_radii)
        return int(((r2 <= 1.0).any(axis=(1, 2))).sum())


def _ellipsoid_r2(shape, center, radii):
    grids = np.meshgrid(*[np.arange(s, dtype=np.float64) for s in shape], indexing="ij")
    r2 = np.zeros(shape, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        if r <= 0:
            return np.full(shape, np.inf)
        r2 += ((g - c) / r) ** 2
    return r2


def _smooth_field(shape, rng, n_bumps=4, bound=True):
    grids = np.meshgrid(*[np.linspace(-1, 1, s) for s in shape], indexing="ij")
    field = 0.3 * grids[1] + 0.2 * grids[2]  # gentle in-plane gradient
    for _ in range(n_bumps):
        center = rng.uniform(-0.6, 0.6, size=3)
        sigma = rng.uniform(0.25, 0.55)
        amp = rng.uniform(-1.0, 1.0)
        d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
        field = field + amp * np.exp(-d2 / (2 * sigma**2))
    field -= field.mean()
    field /= max(field.std(), 1e-8)
    # optionally bound the field so no area ends up extremely dark or bright
    return np.tanh(field) if bound else field


def generate_phantom(subject_id, shape, rng, tumor_radius_range=(0.10, 0.18)):
    """Render one phantom MriVolume plus its analytic truth record."""
    d, h, w = shape
    anatomy = _smooth_field(shape, rng)
    anatomy_b = _smooth_field(shape, rng)

    # brain support: centered ellipsoid covering most of the grid
    brain_r2 = _ellipsoid_r2(shape, (d / 2 - 0.5, h / 2 - 0.5, w / 2 - 0.5), (0.48 * d, 0.46 * h, 0.46 * w))
    brain = brain_r2 <= 1.0

    lo, hi = tumor_radius_range
    radii = tuple(rng.uniform(lo, hi) * s for s in shape)
    # keep the blob strictly inside the brain support
    center = tuple(
        s / 2 - 0.5 + rng.uniform(-0.15, 0.15) * s for s in shape
    )
    r2 = _ellipsoid_r2(shape, center, radii)
    tumor = (r2 <= 1.0) & np.isfinite(r2)
    # near-flat contrast over the mask support with a thin taper at the rim,
    # so the labeled extent and the visible extent coincide
    profile = np.where(np.isfinite(r2), np.clip((1.0 - r2) / 0.08, 0.0, 1.0), 0.0)
    gain = float(rng.uniform(*ENHANCEMENT_GAIN))
    # two-level enhancement texture: the per-voxel deviation from any fixed
    # guess of the enhancement stays bounded away from zero, so the synthesis
    # error inside the tumor cannot vanish anywhere
    texture = np.where(_smooth_field(shape, rng) > 0.0, 1.0, -1.0)
    enhancement = (gain + ENHANCEMENT_TEXTURE * texture) * TARGET_CONTRAST * profile

    # edema-like halo: a dark, patchy shell near the blob in the conditioning
    # modalities only (the target is unaffected), with per-subject depth,
    # standoff and angular coverage. It hints at the lesion neighborhood
    # without tracing the boundary: the inner edge sits at a random offset
    # from the mask and whole sectors are missing. A fixed-rule predictor of
    # the target from the conditioning sees the shell and mispredicts dark
    # patches next to the tumor, while learned synthesis observes that the
    # target never carries it.
    halo_inner = 1.0 + float(rng.uniform(0.0, 0.3))
    halo_gate = np.clip((_smooth_field(shape, rng) - float(rng.uniform(-0.2, 0.4))) / 0.2, 0.0, 1.0)
    halo_shell = np.clip((r2 - halo_inner) / 0.25, 0.0, 1.0) * np.clip((HALO_SCALE**2 - r2) / 0.8, 0.0, 1.0)
    halo_shell = np.where(np.isfinite(r2), halo_shell * halo_gate, 0.0)
    # decoy shells: identical-looking halos at other in-brain locations with
    # no enhancing core and no mask label, so the shell pattern by itself
    # cannot reveal which site is the lesion
    for _ in range(int(rng.integers(1, 4))):
        d_radii = tuple(rng.uniform(lo, hi) * s for s in shape)
        d_center = tuple(s / 2 - 0.5 + rng.uniform(-0.15, 0.15) * s for s in shape)
        d_r2 = _ellipsoid_r2(shape, d_center, d_radii)
        d_inner = 1.0 + float(rng.uniform(0.0, 0.3))
        d_gate = np.clip((_smooth_field(shape, rng) - float(rng.uniform(-0.2, 0.4))) / 0.2, 0.0, 1.0)
        d_shell = np.clip((d_r2 - d_inner) / 0.25, 0.0, 1.0) * np.clip((HALO_SCALE**2 - d_r2) / 0.8, 0.0, 1.0)
        halo_shell = np.maximum(halo_shell, np.where(np.isfinite(d_r2), d_shell * d_gate, 0.0))
    halo_depth = float(rng.uniform(*HALO_DEPTH))


    modalities = {}
    for mod, (offset, a_gain, b_gain) in MODALITY_MIX.items():
        img = offset + a_gain * anatomy
        if mod == "T1ce":
            img = img + b_gain * (2.0 * np.abs(anatomy_b) - 1.0)
            img = img + enhancement
        else:
            img = img + b_gain * anatomy_b
            img = img + BLOB_CONTRAST[mod] * profile
            img = img - halo_depth * halo_shell
        sigma = TARGET_NOISE if mod == "T1ce" else CONDITIONING_NOISE
        img = img + rng.normal(0.0, sigma, size=shape)
        img = np.where(brain, np.maximum(img, 0.02), 0.0)
        modalities[mod] = img.astype(np.float32)

    vol = MriVolume(
        subject_id=subject_id,
        modalities=modalities,
        mask=tumor.astype(np.uint8),
        voxel_spacing=(1.0, 1.0, 1.0),
    )
    truth = PhantomTruth(tumor_center=center, tumor_radii=radii, enhancement_gain=gain)
    return vol, truth


def generate_phantom_dataset(n_subjects, shape=(28, 72, 72), rng_seed=0, tumor_radius_range=(0.10, 0.18)):
    """Deterministically synthesize ``n_subjects`` phantom volumes."""
    if n_subjects < 1:
        raise ValueError(f"n_subjects must be >= 1, got {n_subjects}")
    if any(s < 16 for s in shape):
        raise ValueError(f"each phantom dimension must be >= 16, got {shape}")
    volumes = []
    for i in range(n_subjects):
        rng = np.random.default_rng([rng_seed, i])
        vol, _ = generate_phantom(f"phantom_{i:03d}", tuple(shape), rng, tumor_radius_range)
        volumes.append(vol)
    return volumes


def generate_phantom_with_truth(n_subjects, shape=(28, 72, 72), rng_seed=0, tumor_radius_range=(0.10, 0.18)):
    """Variant returning (volumes, truths) for oracle-style tests."""
    volumes, truths = [], []
    for i in range(n_subjects):
        rng = np.random.default_rng([rng_seed, i])
        vol, truth = generate_phantom(f"phantom_{i:03d}", tuple(shape), rng, tumor_radius_range)
        volumes.append(vol)
        truths.append(truth)
    return volumes, truths
