"""Command-line orchestration of the two-stage pipeline.

All commands share one run directory (``--out``). The expected order is
phantom -> preprocess -> train-diffusion -> train-seg -> evaluate -> plot;
synthesize and calibrate are optional side entries. Every command writes its
fully resolved config (with hash) into its output subdirectory.
"""

import argparse
import json
import os
import shutil
import sys

import numpy as np
import torch

from . import cache, nifti, plots
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config, save_config
from .diffusion import (
    build_schedule_from_config,
    synthesize_for_pairs,
    train_diffusion,
)
from .errors import (
    InvalidConfig,
    MissingArtifact,
    RefusingOverwrite,
    RessegError,
)
from .metrics import MetricsReport, evaluate, threshold_sweep
from .phantom import generate_phantom_dataset
from .residual import calibrate_residual, compute_residual
from .schedule import build_schedule
from .segmentation import binarize, build_seg_inputs, seg_forward, train_segmentation
from .volumes import (
    clip_and_normalize,
    crop_axial,
    filter_slices,
    load_volume,
    model_to_unit,
    resize_slices,
    split_dataset,
    z_to_model,
)


def _prepare_dir(path, force):
    if os.path.exists(path) and os.listdir(path):
        if not force:
            raise RefusingOverwrite(f"output directory {path} exists; pass --force to overwrite")
        shutil.rmtree(path)
    os.makedirs(path, exist_ok=True)


def _write_resolved(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "resolved_config.yaml"))


def _split(cfg, subject_ids):
    return split_dataset(sorted(subject_ids), cfg.data.split_ratios, cfg.data.split_seed)


def _cache_dir(args):
    return os.path.join(args.out, "cache")


def _raw_dir(args):
    return os.path.join(args.out, "raw")


def cmd_phantom(args, cfg):
    raw = _raw_dir(args)
    _prepare_dir(raw, args.force)
    _write_resolved(cfg, raw)
    volumes = generate_phantom_dataset(
        cfg.data.phantom_subjects, cfg.data.phantom_shape, cfg.data.phantom_seed
    )
    for vol in volumes:
        subj_dir = os.path.join(raw, vol.subject_id)
        os.makedirs(subj_dir, exist_ok=True)
        for mod, arr in vol.modalities.items():
            nifti.write_volume(
                os.path.join(subj_dir, f"{vol.subject_id}_{mod}.nii.gz"), arr, vol.voxel_spacing
            )
        nifti.write_volume(
            os.path.join(subj_dir, f"{vol.subject_id}_seg.nii.gz"), vol.mask, vol.voxel_spacing
        )
    print(f"wrote {len(volumes)} phantom subjects to {raw}")
    return 0


def cmd_preprocess(args, cfg):
    raw = _raw_dir(args)
    if not os.path.isdir(raw):
        raise MissingArtifact(f"raw dataset not found at {raw} (run `resseg phantom` or point --out at data)")
    cache_dir = _cache_dir(args)
    _prepare_dir(cache_dir, args.force)
    _write_resolved(cfg, cache_dir)

    subject_ids = sorted(
        d for d in os.listdir(raw) if os.path.isdir(os.path.join(raw, d))
    )
    entries = []
    failures = []
    for sid in subject_ids:
        try:
            vol = load_volume(os.path.join(raw, sid), sid)
            vol = clip_and_normalize(vol, *cfg.data.clip_percentiles)
            vol = crop_axial(vol, cfg.data.crop_top, cfg.data.crop_bottom)
            vol = resize_slices(vol, cfg.data.height, cfg.data.width)
            pairs = filter_slices(vol)
            entries.append(cache.write_subject(cache_dir, sid, pairs))
        except RessegError as exc:
            failures.append((sid, exc))
    digest = cache.write_manifest(cache_dir, entries, config_hash=cfg.hash())
    print(f"cached {len(entries)} subjects, manifest hash {digest}")
    if failures:
        for sid, exc in failures:
            print(f"ERROR {type(exc).__name__}: subject {sid}: {exc}", file=sys.stderr)
        return 1
    return 0


def _load_split_pairs(args, cfg):
    manifest = cache.read_manifest(_cache_dir(args))
    ids = [e["subject_id"] for e in manifest["subjects"]]
    split = _split(cfg, ids)
    return split


def cmd_train_diffusion(args, cfg):
    out_dir = os.path.join(args.out, "diffusion")
    os.makedirs(out_dir, exist_ok=True)
    _write_resolved(cfg, out_dir)
    split = _load_split_pairs(args, cfg)
    train_pairs = cache.load_subjects(_cache_dir(args), split.train)
    val_pairs = cache.load_subjects(_cache_dir(args), split.val)

    start_state = None
    last_path = os.path.join(out_dir, "last.rcsg")
    if args.resume:
        if not os.path.exists(last_path):
            raise MissingArtifact(f"cannot resume: {last_path} not found")
        ckpt = load_checkpoint(last_path, expect_component="diffusion")
        start_state = {
            "model": ckpt.model_state(),
            "restore_optimizer": ckpt.restore_optimizer,
            "epoch": ckpt.epoch,
            "history": ckpt.meta["history"],
        }
        print(f"resuming diffusion training at epoch {ckpt.epoch}")

    net, history, best, opt, sched = train_diffusion(train_pairs, val_pairs, cfg, start_state=start_state)
    arch = {"base_width": cfg.diffusion.base_width, "levels": cfg.diffusion.levels}
    sched_cfg = {
        "timesteps": cfg.schedule.timesteps,
        "kind": cfg.schedule.kind,
        "beta_min": cfg.schedule.beta_min,
        "beta_max": cfg.schedule.beta_max,
    }
    save_checkpoint(
        os.path.join(out_dir, "ckpt.rcsg"), "diffusion", net, arch, schedule=sched_cfg,
        optimizer=opt, epoch=best["epoch"], best_score=best["score"], history=history,
    )
    save_checkpoint(
        last_path, "diffusion", net, arch, schedule=sched_cfg,
        optimizer=opt, epoch=history[-1]["epoch"] + 1 if history else 0,
        best_score=best["score"], history=history,
    )
    with open(os.path.join(out_dir, "training_log.json"), "w") as f:
        json.dump(history, f, indent=2)
    print(f"best validation loss {best['score']:.4f} at epoch {best['epoch']}")
    return 0


def _load_diffusion(args):
    path = os.path.join(args.out, "diffusion", "ckpt.rcsg")
    if not os.path.exists(path):
        raise MissingArtifact(f"diffusion checkpoint not found: {path}")
    ckpt = load_checkpoint(path, expect_component="diffusion")
    return ckpt.build_model(), build_schedule_from_config(ckpt.meta["schedule"])


def cmd_synthesize(args, cfg):
    out_dir = os.path.join(args.out, "synth")
    os.makedirs(out_dir, exist_ok=True)
    _write_resolved(cfg, out_dir)
    net, sched = _load_diffusion(args)
    split = _load_split_pairs(args, cfg)
    subject_ids = getattr(split, args.split)
    for sid in subject_ids:
        pairs = cache.load_subject(_cache_dir(args), sid)
        if not pairs:
            continue
        synth = synthesize_for_pairs(net, sched, pairs, cfg.diffusion.synth_steps, cfg.seed + 100)
        residuals = []
        for i, p in enumerate(pairs):
            real_unit = model_to_unit(z_to_model(p.target))
            raw = compute_residual(real_unit, synth[i])
            residuals.append(
                calibrate_residual(raw, cfg.residual.low_pct, cfg.residual.high_pct).values
            )
        from .archive import write_archive

        write_archive(
            os.path.join(out_dir, f"{sid}.rcsg"),
            {"subject_id": sid, "source": "dynamic",
             "slice_indices": [p.slice_index for p in pairs]},
            {"synth_t1ce": synth.astype(np.float32), "residual": np.stack(residuals)},
        )
    print(f"synthesized {len(subject_ids)} subjects from split {args.split!r}")
    return 0


def _residual_inputs_for(args, cfg, net, sched, pairs, source):
    synth = None
    if source == "dynamic":
        synth = synthesize_for_pairs(net, sched, pairs, cfg.diffusion.synth_steps, cfg.seed + 100)
    return build_seg_inputs(pairs, source, synth_unit=synth,
                            low_pct=cfg.residual.low_pct, high_pct=cfg.residual.high_pct)


def cmd_train_seg(args, cfg):
    source = cfg.residual.source
    out_dir = os.path.join(args.out, f"seg_{source}")
    os.makedirs(out_dir, exist_ok=True)
    _write_resolved(cfg, out_dir)
    split = _load_split_pairs(args, cfg)
    train_pairs = cache.load_subjects(_cache_dir(args), split.train)
    val_pairs = cache.load_subjects(_cache_dir(args), split.val)

    net = sched = None
    if source == "dynamic":
        net, sched = _load_diffusion(args)

    train_inputs = _residual_inputs_for(args, cfg, net, sched, train_pairs, source)
    val_inputs = _residual_inputs_for(args, cfg, net, sched, val_pairs, source)
    model, history, best, opt = train_segmentation(
        train_inputs, [p.mask for p in train_pairs],
        val_inputs, [p.mask for p in val_pairs], cfg,
    )
    arch = {"base_width": cfg.segmentation.base_width, "levels": cfg.segmentation.levels}
    save_checkpoint(
        os.path.join(out_dir, "ckpt.rcsg"), "segmentation", model, arch,
        optimizer=opt, epoch=best["epoch"], best_score=best["score"], history=history,
        extra={"residual_source": source},
    )
    with open(os.path.join(out_dir, "training_log.json"), "w") as f:
        json.dump(history, f, indent=2)
    print(f"best validation dice {best['score']:.4f} at epoch {best['epoch']}")
    return 0


def _load_seg(args, source):
    path = os.path.join(args.out, f"seg_{source}", "ckpt.rcsg")
    if not os.path.exists(path):
        raise MissingArtifact(f"segmentation checkpoint not found: {path}")
    return load_checkpoint(path, expect_component="segmentation").build_model()


def _eval_report(args, cfg, split_name="test"):
    source = cfg.residual.source
    seg_model = _load_seg(args, source)
    net = sched = None
    if source == "dynamic":
        net, sched = _load_diffusion(args)
    split = _load_split_pairs(args, cfg)
    subject_ids = getattr(split, split_name)
    subjects = {sid: cache.load_subject(_cache_dir(args), sid) for sid in subject_ids}
    return evaluate(seg_model, net, sched, subjects, cfg)


def cmd_evaluate(args, cfg):
    out_dir = os.path.join(args.out, f"eval_{cfg.residual.source}")
    os.makedirs(out_dir, exist_ok=True)
    _write_resolved(cfg, out_dir)
    report = _eval_report(args, cfg, split_name=args.split)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        f.write(report.to_json())
    with open(os.path.join(out_dir, "report.csv"), "w") as f:
        f.write(report.to_csv())
    print(f"{'tau':>5} {'Dice (%)':>10} {'IoU (%)':>10}")
    for tau in cfg.eval.taus:
        agg = report.aggregate[f"{tau:g}"]
        print(f"{tau:>5g} {100 * agg['dice_mean']:>10.2f} {100 * agg['iou_mean']:>10.2f}")
    print(f"chosen tau: {report.chosen_tau:g}")
    return 0


def cmd_calibrate(args, cfg):
    out_dir = os.path.join(args.out, "calibrate")
    os.makedirs(out_dir, exist_ok=True)
    _write_resolved(cfg, out_dir)
    report = _eval_report(args, cfg, split_name="val")
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        f.write(report.to_json())
    print(f"calibrated threshold on validation split: tau = {report.chosen_tau:g}")
    return 0


def cmd_plot(args, cfg):
    out_dir = os.path.join(args.out, "plots")
    os.makedirs(out_dir, exist_ok=True)
    _write_resolved(cfg, out_dir)
    source = cfg.residual.source
    report_path = os.path.join(args.out, f"eval_{source}", "report.json")
    if not os.path.exists(report_path):
        raise MissingArtifact(f"evaluation report not found: {report_path}")
    with open(report_path) as f:
        report = MetricsReport.from_json(f.read())

    split = _load_split_pairs(args, cfg)
    sid = sorted(split.test)[0]
    pairs = cache.load_subject(_cache_dir(args), sid)
    if not pairs:
        raise MissingArtifact(f"subject {sid} has no cached slices")
    pair = pairs[len(pairs) // 2]

    net, sched = _load_diffusion(args)
    seg_model = _load_seg(args, source)
    synth = synthesize_for_pairs(net, sched, [pair], cfg.diffusion.synth_steps, cfg.seed + 100)
    real_unit = model_to_unit(z_to_model(pair.target))
    res = calibrate_residual(
        compute_residual(real_unit, synth[0]), cfg.residual.low_pct, cfg.residual.high_pct
    )
    inputs = build_seg_inputs([pair], source, synth_unit=synth,
                              low_pct=cfg.residual.low_pct, high_pct=cfg.residual.high_pct)
    prob = seg_forward(seg_model, inputs[0])
    pred = binarize(prob, report.chosen_tau)

    cond_unit = model_to_unit(z_to_model(pair.conditioning))
    plots.synthesis_panel(cond_unit, real_unit, synth[0], res.values,
                          os.path.join(out_dir, f"{sid}_synthesis.png"))
    plots.segmentation_panel(cond_unit[0], pair.mask, pred,
                             os.path.join(out_dir, f"{sid}_segmentation.png"))
    plots.threshold_panel(cond_unit[0], pair.mask, prob, cfg.eval.taus,
                          os.path.join(out_dir, f"{sid}_thresholds.png"))
    print(f"wrote 3 figures to {out_dir}")
    return 0


COMMANDS = {
    "phantom": cmd_phantom,
    "preprocess": cmd_preprocess,
    "train-diffusion": cmd_train_diffusion,
    "synthesize": cmd_synthesize,
    "train-seg": cmd_train_seg,
    "evaluate": cmd_evaluate,
    "calibrate": cmd_calibrate,
    "plot": cmd_plot,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="resseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--profile", default="quick", choices=["quick", "paper"])
        p.add_argument("--seed", type=int, default=None, help="override the global seed")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. residual.source=static")
        if name in ("evaluate", "synthesize"):
            p.add_argument("--split", default="test" if name == "evaluate" else "val",
                           choices=["train", "val", "test"])
        if name == "train-diffusion":
            p.add_argument("--resume", action="store_true")
    return parser


def _parse_overrides(pairs):
    overrides = {}
    for item in pairs:
        if "=" not in item:
            raise InvalidConfig(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = overrides
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return overrides


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = _parse_overrides(args.set)
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = load_config(args.config, profile=args.profile, overrides=overrides)
        torch.manual_seed(cfg.seed)
        return COMMANDS[args.command](args, cfg)
    except RessegError as exc:
        print(f"ERROR {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
