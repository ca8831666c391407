"""Preprocessed slice cache: one tensor archive per subject plus a JSON manifest."""

import hashlib
import json
import os

import numpy as np

from .archive import read_archive, write_archive
from .errors import MissingArtifact
from .volumes import SlicePair

MANIFEST_NAME = "manifest.json"


def write_subject(cache_dir, subject_id, pairs):
    """Persist one subject's SlicePairs; returns the manifest entry."""
    fname = f"{subject_id}.rcsg"
    path = os.path.join(cache_dir, fname)
    if pairs:
        tensors = {
            "conditioning": np.stack([p.conditioning for p in pairs]).astype(np.float32),
            "target": np.stack([p.target for p in pairs]).astype(np.float32),
            "mask": np.stack([p.mask for p in pairs]).astype(np.uint8),
            "slice_indices": np.array([p.slice_index for p in pairs], dtype=np.int64),
        }
    else:
        h = w = 0
        tensors = {
            "conditioning": np.zeros((0, 3, h, w), np.float32),
            "target": np.zeros((0, h, w), np.float32),
            "mask": np.zeros((0, h, w), np.uint8),
            "slice_indices": np.zeros((0,), np.int64),
        }
    write_archive(path, {"subject_id": subject_id, "n_slices": len(pairs)}, tensors)
    with open(path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    return {
        "subject_id": subject_id,
        "file": fname,
        "sha256": digest,
        "slice_indices": [p.slice_index for p in pairs],
    }


def write_manifest(cache_dir, entries, config_hash=None):
    manifest = {
        "config_hash": config_hash,
        "subjects": sorted(entries, key=lambda e: e["subject_id"]),
    }
    blob = json.dumps(manifest, indent=2, sort_keys=True)
    with open(os.path.join(cache_dir, MANIFEST_NAME), "w") as f:
        f.write(blob)
    return hashlib.sha256(blob.encode()).hexdigest()


def read_manifest(cache_dir):
    path = os.path.join(cache_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise MissingArtifact(f"slice cache manifest not found: {path}")
    with open(path) as f:
        return json.load(f)


def manifest_hash(cache_dir):
    path = os.path.join(cache_dir, MANIFEST_NAME)
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def load_subject(cache_dir, subject_id):
    """Load one subject back into a list of SlicePairs."""
    path = os.path.join(cache_dir, f"{subject_id}.rcsg")
    if not os.path.exists(path):
        raise MissingArtifact(f"cached subject not found: {path}")
    meta, tensors = read_archive(path)
    pairs = []
    for i, idx in enumerate(tensors["slice_indices"]):
        pairs.append(
            SlicePair(
                conditioning=tensors["conditioning"][i],
                target=tensors["target"][i],
                mask=tensors["mask"][i],
                subject_id=meta["subject_id"],
                slice_index=int(idx),
            )
        )
    return pairs


def load_subjects(cache_dir, subject_ids):
    """Flat list of SlicePairs over several subjects, in subject then slice order."""
    pairs = []
    for sid in subject_ids:
        pairs.extend(load_subject(cache_dir, sid))
    return pairs
