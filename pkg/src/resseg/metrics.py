"""Overlap metrics, threshold sweeps and full-pipeline evaluation reports."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, RangeViolation


def _check_binary(name, arr):
    arr = np.asarray(arr)
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    vals = np.unique(arr)
    if not np.all(np.isin(vals, (0, 1))):
        raise RangeViolation(f"{name} is not binary (values {vals[:5]})")
    return arr.astype(np.uint8)


def dice(pred, gt):
    """2|P&G| / (|P|+|G|); both masks empty scores 1.0 by convention."""
    pred = _check_binary("pred", pred)
    gt = _check_binary("gt", gt)
    if pred.shape != gt.shape:
        raise AlignmentError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    denom = int(pred.sum()) + int(gt.sum())
    if denom == 0:
        return 1.0
    inter = int(np.logical_and(pred, gt).sum())
    return 2.0 * inter / denom


def iou(pred, gt):
    """Intersection over union |P&G| / |PvG|; both masks empty scores 1.0."""
    pred = _check_binary("pred", pred)
    gt = _check_binary("gt", gt)
    if pred.shape != gt.shape:
        raise AlignmentError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(pred, gt).sum())
    return inter / union


@dataclass
class MetricsReport:
    per_subject: list  # rows: dicts with subject_id, tau, dice, iou, positive_pixels
    aggregate: dict  # tau(str) -> {dice_mean, dice_std, iou_mean, iou_std}
    chosen_tau: float
    config_fingerprint: str = ""
    residual_source: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "per_subject": self.per_subject,
                "aggregate": self.aggregate,
                "chosen_tau": self.chosen_tau,
                "config_fingerprint": self.config_fingerprint,
                "residual_source": self.residual_source,
                "extra": self.extra,
            },
            indent=2,
            sort_keys=True,
        )

    def to_csv(self):
        """One row per (subject, tau); percentages rounded to 2 decimals."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["subject_id", "tau", "dice_pct", "iou_pct", "positive_pixels"])
        for row in self.per_subject:
            writer.writerow(
                [
                    row["subject_id"],
                    f"{row['tau']:g}",
                    f"{100.0 * row['dice']:.2f}",
                    f"{100.0 * row['iou']:.2f}",
                    row["positive_pixels"],
                ]
            )
        return buf.getvalue()

    def mean_dice(self, tau):
        return self.aggregate[f"{tau:g}"]["dice_mean"]

    def mean_iou(self, tau):
        return self.aggregate[f"{tau:g}"]["iou_mean"]

    @staticmethod
    def from_json(blob):
        doc = json.loads(blob)
        return MetricsReport(
            per_subject=doc["per_subject"],
            aggregate=doc["aggregate"],
            chosen_tau=doc["chosen_tau"],
            config_fingerprint=doc.get("config_fingerprint", ""),
            residual_source=doc.get("residual_source", ""),
            extra=doc.get("extra", {}),
        )


def threshold_sweep(probs, gts, taus=(0.3, 0.4, 0.5), subject_ids=None, config_fingerprint="", residual_source=""):
    """Per-subject Dice/IoU at each threshold; chooses the best-tradeoff tau.

    Each element of ``probs``/``gts`` is one subject (any matching shape, 2D
    slice or pooled 3D stack). chosen_tau maximizes (mean dice + mean iou)/2,
    ties broken toward the smaller threshold.
    """
    if len(probs) != len(gts) or not probs:
        raise AlignmentError(f"got {len(probs)} probability maps vs {len(gts)} masks")
    if subject_ids is None:
        subject_ids = [f"subject_{i:03d}" for i in range(len(probs))]
    if len(subject_ids) != len(probs):
        raise AlignmentError("subject id list misaligned")

    taus = [float(t) for t in taus]
    rows = []
    aggregate = {}
    for tau in taus:
        dices, ious = [], []
        for sid, p, g in zip(subject_ids, probs, gts):
            pred = (np.asarray(p) >= tau).astype(np.uint8)
            g = _check_binary("gt", g)
            d = dice(pred, g)
            j = iou(pred, g)
            rows.append(
                {
                    "subject_id": sid,
                    "tau": tau,
                    "dice": d,
                    "iou": j,
                    "positive_pixels": int(pred.sum()),
                }
            )
            dices.append(d)
            ious.append(j)
        aggregate[f"{tau:g}"] = {
            "dice_mean": float(np.mean(dices)),
            "dice_std": float(np.std(dices)),
            "iou_mean": float(np.mean(ious)),
            "iou_std": float(np.std(ious)),
        }

    def tradeoff(tau):
        agg = aggregate[f"{tau:g}"]
        return (agg["dice_mean"] + agg["iou_mean"]) / 2.0

    best = max(sorted(taus), key=lambda tau: (tradeoff(tau), -tau))
    return MetricsReport(
        per_subject=rows,
        aggregate=aggregate,
        chosen_tau=best,
        config_fingerprint=config_fingerprint,
        residual_source=residual_source,
    )


def evaluate_subject_probs(seg_model, diff_model, sched, pairs, cfg, residual_source=None):
    """Probability stack (N, H, W) for one subject's slices via the full pipeline."""
    from .diffusion import synthesize_for_pairs
    from .segmentation import build_seg_inputs, seg_forward

    source = residual_source or cfg.residual.source
    synth = None
    if source == "dynamic":
        synth = synthesize_for_pairs(
            diff_model, sched, pairs, cfg.diffusion.synth_steps, rng_seed=cfg.seed + 100
        )
    inputs = build_seg_inputs(
        pairs, source, synth_unit=synth, low_pct=cfg.residual.low_pct, high_pct=cfg.residual.high_pct
    )
    batch = np.stack([s.channels for s in inputs])
    return seg_forward(seg_model, batch)


def evaluate(seg_model, diff_model, sched, subjects, cfg, taus=None, residual_source=None):
    """Full-pipeline MetricsReport over ``subjects``: {subject_id: list of SlicePairs}.

    Per-subject scores pool the subject's evaluated slices as one 3D mask.
    """
    if not subjects:
        raise AlignmentError("empty evaluation split")
    taus = taus if taus is not None else cfg.eval.taus
    probs, gts, ids = [], [], []
    for sid in sorted(subjects):
        pairs = subjects[sid]
        if not pairs:
            continue
        p = evaluate_subject_probs(seg_model, diff_model, sched, pairs, cfg, residual_source)
        probs.append(p)
        gts.append(np.stack([pair.mask for pair in pairs]))
        ids.append(sid)
    if not probs:
        raise AlignmentError("no evaluable slices in split")
    return threshold_sweep(
        probs, gts, taus,
        subject_ids=ids,
        config_fingerprint=cfg.hash(),
        residual_source=residual_source or cfg.residual.source,
    )
