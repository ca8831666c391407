"""Phantom generator against its analytic ground truth."""

import numpy as np
import pytest

from resseg.phantom import (
    PhantomTruth,
    generate_phantom,
    generate_phantom_dataset,
    generate_phantom_with_truth,
)
from resseg.volumes import clip_and_normalize, crop_axial, filter_slices


class TestDeterminism:
    def test_regeneration_bit_identical(self):
        a = generate_phantom_dataset(3, shape=(16, 32, 32), rng_seed=7)
        b = generate_phantom_dataset(3, shape=(16, 32, 32), rng_seed=7)
        for va, vb in zip(a, b):
            assert va.subject_id == vb.subject_id
            for m in va.modalities:
                assert np.array_equal(va.modalities[m], vb.modalities[m])
            assert np.array_equal(va.mask, vb.mask)

    def test_different_seeds_differ(self):
        a = generate_phantom_dataset(1, shape=(16, 32, 32), rng_seed=1)[0]
        b = generate_phantom_dataset(1, shape=(16, 32, 32), rng_seed=2)[0]
        assert not np.array_equal(a.modalities["FLAIR"], b.modalities["FLAIR"])

    def test_subjects_within_dataset_differ(self):
        vols = generate_phantom_dataset(2, shape=(16, 32, 32), rng_seed=3)
        assert not np.array_equal(vols[0].mask, vols[1].mask)


class TestGroundTruthOracles:
    def test_mask_matches_analytic_ellipsoid_count(self):
        vols, truths = generate_phantom_with_truth(5, shape=(18, 40, 40), rng_seed=5)
        for vol, truth in zip(vols, truths):
            assert int(vol.mask.sum()) == truth.ellipsoid_voxel_count(vol.shape)

    def test_filtered_slice_count_matches_axial_extent(self):
        vols, truths = generate_phantom_with_truth(5, shape=(18, 40, 40), rng_seed=6)
        for vol, truth in zip(vols, truths):
            vol = clip_and_normalize(vol)
            pairs = filter_slices(vol)
            assert len(pairs) == truth.axial_extent(vol.shape)

    def test_axial_extent_survives_crop_arithmetic(self):
        vols, truths = generate_phantom_with_truth(3, shape=(24, 40, 40), rng_seed=8)
        for vol, truth in zip(vols, truths):
            cropped = crop_axial(clip_and_normalize(vol), 2, 2)
            pairs = filter_slices(cropped)
            # cropping can only remove tumor slices, never add them
            assert len(pairs) <= truth.axial_extent(vol.shape)

    def test_degenerate_radius_gives_empty_mask(self):
        rng = np.random.default_rng(0)
        vol, truth = generate_phantom("p", (16, 24, 24), rng, tumor_radius_range=(0.0, 0.0))
        assert vol.mask.sum() == 0
        assert truth.ellipsoid_voxel_count(vol.shape) == 0

    def test_truth_record_fields(self):
        _, truth = generate_phantom("p", (16, 24, 24), np.random.default_rng(1))
        assert isinstance(truth, PhantomTruth)
        assert len(truth.tumor_center) == 3 and len(truth.tumor_radii) == 3
        assert truth.enhancement_gain > 0


class TestSignalDesign:
    def test_enhancement_only_in_target(self):
        vols, truths = generate_phantom_with_truth(4, shape=(16, 32, 32), rng_seed=9)
        for vol, truth in zip(vols, truths):
            m = vol.mask.astype(bool)
            brain = vol.modalities["T1ce"] > 0
            contrast = {
                mod: vol.modalities[mod][m].mean() - vol.modalities[mod][brain & ~m].mean()
                for mod in vol.modalities
            }
            for mod in ("FLAIR", "T1", "T2"):
                assert contrast["T1ce"] > 5 * contrast[mod]

    def test_validation_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_phantom_dataset(0, shape=(16, 32, 32))
        with pytest.raises(ValueError):
            generate_phantom_dataset(1, shape=(8, 32, 32))
