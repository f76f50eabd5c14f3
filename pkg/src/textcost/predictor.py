"""Frozen-model inference: cosine scoring of trajectory prefixes against
constraint text, ROC-based threshold calibration, and the thresholded cost
rule consumed by the safe-RL trainer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .constraints import ConstraintText
from .corpus import Trajectory
from .models import AlignmentModel, cosine, gather_final, pad_token_batch, pad_trajectory_batch, tokenize


class CalibrationError(ValueError):
    pass


@dataclass
class CalibrationReport:
    auc: float
    best_cutoff: float
    tpr: np.ndarray
    fpr: np.ndarray
    thresholds: np.ndarray
    accuracy: float
    recall: float
    precision: float
    f1: float


@dataclass
class CostSignal:
    c_hat: float
    violated: bool
    sim: float


def _encode_pair(model: AlignmentModel, traj: Trajectory, text: ConstraintText):
    obs, act, lengths = pad_trajectory_batch([traj.observations], [traj.actions])
    toks = [tokenize(model.vocab, text.text, model.config.max_text_len)]
    tokens, tok_lengths = pad_token_batch(toks)
    with torch.no_grad():
        h = model.encode_trajectory(obs, act)
        l = model.encode_text(tokens, tok_lengths)
    return h[0], l[0]


def score(model: AlignmentModel, traj: Trajectory, text: ConstraintText) -> float:
    """Unscaled cosine between the prefix's final step embedding and the text
    embedding; the calibrated threshold lives on this same scale."""
    h, l = _encode_pair(model, traj, text)
    return float(cosine(h[-1], l).item())


def score_many(
    model: AlignmentModel, items: list[tuple[Trajectory, ConstraintText]],
    batch_size: int = 64,
) -> np.ndarray:
    scores = []
    for start in range(0, len(items), batch_size):
        chunk = items[start : start + batch_size]
        obs, act, lengths = pad_trajectory_batch(
            [t.observations for t, _ in chunk], [t.actions for t, _ in chunk]
        )
        tokens, tok_lengths = pad_token_batch(
            [tokenize(model.vocab, c.text, model.config.max_text_len) for _, c in chunk]
        )
        with torch.no_grad():
            h = model.encode_trajectory(obs, act)
            l = model.encode_text(tokens, tok_lengths)
            h_final = gather_final(h, lengths)
            scores.append(cosine(h_final, l).cpu().numpy())
    return np.concatenate(scores)


# ---------------------------------------------------------------------------
# ROC / AUC


def roc_curve(scores: np.ndarray, labels: np.ndarray):
    """Threshold sweep over the observed scores, descending.

    Returns (fpr, tpr, thresholds); a point per distinct score plus the
    all-negative start point.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() == labels.max():
        raise CalibrationError("calibration requires both positive and negative labels")
    order = np.argsort(-scores, kind="stable")
    scores_sorted = scores[order]
    labels_sorted = labels[order]
    distinct = np.r_[np.diff(scores_sorted) != 0, True]
    tps = np.cumsum(labels_sorted)[distinct]
    fps = np.cumsum(1 - labels_sorted)[distinct]
    tpr = np.r_[0.0, tps / tps[-1]]
    fpr = np.r_[0.0, fps / fps[-1]]
    thresholds = np.r_[np.inf, scores_sorted[distinct]]
    return fpr, tpr, thresholds


def auc_from_roc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.trapezoid(tpr, fpr))


def calibrate_scores(scores: np.ndarray, labels: np.ndarray) -> CalibrationReport:
    """Pick the cutoff maximizing Youden's J = TPR - FPR; report AUC and the
    confusion metrics at the chosen cutoff."""
    fpr, tpr, thresholds = roc_curve(scores, labels)
    j = tpr - fpr
    best = int(np.argmax(j))
    beta = float(thresholds[best])
    pred = np.asarray(scores) >= beta
    labels = np.asarray(labels).astype(bool)
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    tn = int(np.sum(~pred & ~labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return CalibrationReport(
        auc=auc_from_roc(fpr, tpr),
        best_cutoff=beta,
        tpr=tpr,
        fpr=fpr,
        thresholds=thresholds,
        accuracy=(tp + tn) / len(labels),
        recall=recall,
        precision=precision,
        f1=f1,
    )


# ---------------------------------------------------------------------------
# Calibrated predictor


@dataclass
class CalibratedPredictor:
    model: AlignmentModel
    beta: float
    calibration_report: CalibrationReport | None = None

    def __post_init__(self):
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)


def calibrate(
    model: AlignmentModel, validation: list[tuple[Trajectory, ConstraintText, int]]
) -> CalibratedPredictor:
    """validation: (trajectory, text, label) triples; label 1 = the trajectory
    violates the text's constraint within its length."""
    labels = np.array([lab for _, _, lab in validation], dtype=np.int64)
    scores = score_many(model, [(t, c) for t, c, _ in validation])
    report = calibrate_scores(scores, labels)
    return CalibratedPredictor(model, report.best_cutoff, report)


def calibrate_per_family(
    model: AlignmentModel, validation: list[tuple[Trajectory, ConstraintText, int]]
) -> dict:
    """One CalibratedPredictor per constraint family present in the triples.

    The global calibration remains the default; this exists for diagnosing
    family-dependent threshold drift.
    """
    groups: dict = {}
    for traj, text, label in validation:
        groups.setdefault(text.spec.family, []).append((traj, text, label))
    out = {}
    for family, triples in sorted(groups.items()):
        labels = {lab for _, _, lab in triples}
        if len(labels) < 2:  # family not calibratable from this validation set
            continue
        out[family] = calibrate(model, triples)
    return out


def predict_cost(
    pred: CalibratedPredictor, traj: Trajectory, text: ConstraintText
) -> CostSignal:
    """Thresholded cost rule: cosine >= beta declares a violation with cost
    exactly 1; otherwise the cost-assignment head supplies a dense in-(0,1)
    cost at the final prefix step."""
    model = pred.model
    h, l = _encode_pair(model, traj, text)
    sim = float(cosine(h[-1], l).item())
    if sim >= pred.beta:
        return CostSignal(c_hat=1.0, violated=True, sim=sim)
    with torch.no_grad():
        e_t = torch.sigmoid(torch.exp(model.alpha) * cosine(h[-1], l))
        h_star = e_t * h[-1]
        c = torch.sigmoid(model.head_c(torch.cat([h_star, l]))).item()
    return CostSignal(c_hat=float(c), violated=False, sim=sim)


# ---------------------------------------------------------------------------
# Report serialization (consumed by the CLI)


def save_calibration_report(path, pred: CalibratedPredictor) -> None:
    rep = pred.calibration_report
    payload = {
        "beta": pred.beta,
        "auc": rep.auc,
        "accuracy": rep.accuracy,
        "recall": rep.recall,
        "precision": rep.precision,
        "f1": rep.f1,
        "roc": {
            "fpr": rep.fpr.tolist(),
            "tpr": rep.tpr.tolist(),
            "thresholds": [
                None if not np.isfinite(t) else float(t) for t in rep.thresholds
            ],
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)


def load_calibration_beta(path) -> float:
    with open(path) as f:
        return float(json.load(f)["beta"])
