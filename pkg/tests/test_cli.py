"""CLI verbs on a miniature phantom run: contracts, error paths, resume."""

import json
import os

import numpy as np
import pytest

from resseg.archive import read_archive
from resseg.cache import manifest_hash, read_manifest
from resseg.checkpoint import load_checkpoint
from resseg.cli import main

TINY = [
    "--set", "data.phantom_subjects=6",
    "--set", "data.phantom_shape=[16,40,40]",
    "--set", "data.crop_top=1",
    "--set", "data.crop_bottom=1",
    "--set", "data.height=32",
    "--set", "data.width=32",
    "--set", "schedule.timesteps=20",
    "--set", "diffusion.base_width=8",
    "--set", "diffusion.levels=2",
    "--set", "diffusion.epochs=2",
    "--set", "diffusion.synth_steps=5",
    "--set", "segmentation.base_width=8",
    "--set", "segmentation.levels=2",
    "--set", "segmentation.epochs=2",
]


def run(verb, out, *extra):
    return main([verb, "--out", str(out), *TINY, *extra])


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    assert run("phantom", out) == 0
    assert run("preprocess", out) == 0
    return out


class TestPhantomCommand:
    def test_layout(self, tiny_run):
        raw = tiny_run / "raw"
        subjects = sorted(d for d in os.listdir(raw) if d.startswith("phantom_"))
        assert len(subjects) == 6
        files = sorted(os.listdir(raw / subjects[0]))
        assert files == [
            f"{subjects[0]}_{suffix}.nii.gz"
            for suffix in sorted(["FLAIR", "T1", "T1ce", "T2", "seg"])
        ]

    def test_refuses_overwrite_without_force(self, tiny_run):
        assert run("phantom", tiny_run) == 1

    def test_force_regeneration_is_byte_identical(self, tiny_run, tmp_path):
        assert run("phantom", tmp_path) == 0
        a = (tiny_run / "raw" / "phantom_000" / "phantom_000_T1ce.nii.gz").read_bytes()
        b = (tmp_path / "raw" / "phantom_000" / "phantom_000_T1ce.nii.gz").read_bytes()
        assert a == b

    def test_resolved_config_written(self, tiny_run):
        assert (tiny_run / "raw" / "resolved_config.yaml").exists()


class TestPreprocessCommand:
    def test_manifest_lists_only_tumor_slices(self, tiny_run):
        manifest = read_manifest(str(tiny_run / "cache"))
        assert len(manifest["subjects"]) == 6
        for entry in manifest["subjects"]:
            assert entry["slice_indices"], f"{entry['subject_id']} cached no slices"

    def test_rerun_reproduces_manifest_hash(self, tiny_run, tmp_path):
        before = manifest_hash(str(tiny_run / "cache"))
        assert run("preprocess", tiny_run, "--force") == 0
        assert manifest_hash(str(tiny_run / "cache")) == before

    def test_missing_raw_dataset(self, tmp_path):
        assert run("preprocess", tmp_path) == 1

    def test_corrupt_subject_isolated(self, tmp_path):
        assert run("phantom", tmp_path) == 0
        bad = tmp_path / "raw" / "phantom_003" / "phantom_003_T2.nii.gz"
        bad.unlink()
        assert run("preprocess", tmp_path) == 1  # failure reported...
        manifest = read_manifest(str(tmp_path / "cache"))
        ids = [e["subject_id"] for e in manifest["subjects"]]
        assert "phantom_003" not in ids
        assert len(ids) == 5  # ...but the healthy subjects were still cached


class TestTrainingCommands:
    def test_seg_dynamic_requires_diffusion_checkpoint(self, tiny_run):
        assert run("train-seg", tiny_run) == 1

    def test_resume_without_checkpoint(self, tiny_run):
        assert run("train-diffusion", tiny_run, "--resume") == 1

    def test_diffusion_then_resume_continues_epochs(self, tiny_run):
        assert run("train-diffusion", tiny_run) == 0
        ckpt = load_checkpoint(str(tiny_run / "diffusion" / "last.rcsg"))
        assert ckpt.epoch == 2
        # extend the budget and resume: training picks up at the saved epoch
        assert (
            main(
                ["train-diffusion", "--out", str(tiny_run), *TINY, "--resume",
                 "--set", "diffusion.epochs=3"]
            )
            == 0
        )
        ckpt = load_checkpoint(str(tiny_run / "diffusion" / "last.rcsg"))
        assert ckpt.epoch == 3
        history = json.loads((tiny_run / "diffusion" / "training_log.json").read_text())
        assert [h["epoch"] for h in history] == [0, 1, 2]

    def test_seg_and_evaluate_zero_residual(self, tiny_run):
        extra = ["--set", "residual.source=zero"]
        assert run("train-seg", tiny_run, *extra) == 0
        assert run("evaluate", tiny_run, *extra) == 0
        report = json.loads((tiny_run / "eval_zero" / "report.json").read_text())
        assert report["residual_source"] == "zero"
        taus = sorted({row["tau"] for row in report["per_subject"]})
        assert taus == [0.3, 0.4, 0.5]
        csv_lines = (tiny_run / "eval_zero" / "report.csv").read_text().strip().split("\n")
        assert csv_lines[0] == "subject_id,tau,dice_pct,iou_pct,positive_pixels"
        assert len(csv_lines) == 1 + len(report["per_subject"])

    def test_synthesize_writes_residual_archives(self, tiny_run):
        assert run("synthesize", tiny_run, "--split", "val") == 0
        files = [f for f in os.listdir(tiny_run / "synth") if f.endswith(".rcsg")]
        assert files
        meta, tensors = read_archive(tiny_run / "synth" / files[0])
        assert meta["source"] == "dynamic"
        assert tensors["synth_t1ce"].shape == tensors["residual"].shape
        assert tensors["residual"].min() >= 0.0 and tensors["residual"].max() <= 1.0

    def test_plot_requires_report(self, tmp_path):
        assert run("plot", tmp_path) == 1


class TestArgumentHandling:
    def test_malformed_set_flag(self, tmp_path):
        assert main(["phantom", "--out", str(tmp_path), "--set", "nonsense"]) == 1

    def test_unknown_config_key(self, tmp_path):
        assert main(["phantom", "--out", str(tmp_path), "--set", "nope.x=1"]) == 1

    def test_error_line_is_machine_parsable(self, tmp_path, capsys):
        main(["preprocess", "--out", str(tmp_path)])
        err = capsys.readouterr().err
        assert err.startswith("ERROR MissingArtifact:")
