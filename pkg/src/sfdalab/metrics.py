"""Evaluation and unsupervised model selection.

Accuracy reports, the soft neighborhood density (SND) score used to pick
the decay exponent without labels, neighbor-agreement ratios over a
memory bank, open-set score arithmetic (OS*, UNK, HOS, OS), and decision
boundary grids exported as CSV for plotting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bank import MemoryBank
from .errors import ConfigError, InsufficientDataError, ShapeError
from .model import MlpModel, forward, predict_labels
from .numerics import as_matrix, l2_normalize_rows

SND_TAU = 0.05
RATIO_K = 3


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: dict          # class id -> accuracy, absent if no true samples
    mean_per_class: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {str(c): v for c, v in sorted(self.per_class_accuracy.items())},
            "mean_per_class": self.mean_per_class,
            "n_samples": self.n_samples,
        }


@dataclass
class OdaScores:
    os_star: float
    unk: float
    hos: float
    os: float
    num_known_classes: int


def classification_report(predictions, truth, num_classes: int) -> EvalReport:
    """Overall and per-class accuracy. Truth entries of -1 mark unknown
    or unlabeled samples and are skipped; classes without any true
    sample are left out of the per-class table and its mean."""
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ShapeError("predictions and truth must be equal-length 1-D arrays")
    known = true >= 0
    if not np.any(known):
        raise InsufficientDataError("no labeled samples to score")
    pred, true = pred[known], true[known]
    accuracy = float(np.mean(pred == true))
    per_class = {}
    for c in range(num_classes):
        mask = true == c
        if np.any(mask):
            per_class[c] = float(np.mean(pred[mask] == c))
    mean_pc = float(np.mean(list(per_class.values())))
    return EvalReport(accuracy=accuracy, per_class_accuracy=per_class,
                      mean_per_class=mean_pc, n_samples=int(true.shape[0]))


def snd_score(P_target, tau: float = SND_TAU) -> float:
    """Soft neighborhood density of a prediction matrix.

    Rows are L2-normalized, pairwise dot products form a similarity
    matrix whose diagonal is masked out, each row is softmaxed at
    temperature tau, and the mean row entropy is returned. Larger values
    indicate denser, more consistent prediction neighborhoods.
    """
    P = as_matrix(P_target, "P_target")
    if P.shape[0] < 2:
        raise InsufficientDataError("SND needs at least 2 rows")
    if tau <= 0:
        raise ConfigError("tau must be positive")
    sims = l2_normalize_rows(P)
    sims = sims @ sims.T
    sims /= tau
    np.fill_diagonal(sims, -np.inf)
    # softmax per row; exp(-inf) = 0 removes the diagonal cleanly.
    # Row entropy via H = log z - sum(w * shifted) / z with w = exp(shifted),
    # z = sum(w), which avoids materializing log(p) for every entry.
    sims -= sims.max(axis=1, keepdims=True)
    w = np.exp(sims)
    np.fill_diagonal(sims, 0.0)  # clears the -inf before the product below
    np.multiply(w, sims, out=sims)
    z = w.sum(axis=1)
    ent = np.log(z) - sims.sum(axis=1) / z
    return float(ent.mean())


def agreement_ratios(bank: MemoryBank, labels=None, k: int = RATIO_K):
    """Fraction of stored samples whose k nearest neighbors all share the
    sample's own predicted label, and (when true labels are given) the
    fraction of those whose shared label is also correct.

    ``labels`` is indexed by sample id. Returns (same_ratio, correct_ratio);
    the second is None without labels and 0.0 when no sample qualifies.
    """
    sids, feats, preds = bank.snapshot()
    if sids.shape[0] <= k:
        raise InsufficientDataError(f"bank holds {sids.shape[0]} samples, need > {k}")
    own = np.argmax(preds, axis=1)
    _, _, nbr_preds = bank.knn_batch(feats, k, exclude_ids=sids)
    nbr_labels = np.argmax(nbr_preds, axis=2)            # (n, k)
    same = np.all(nbr_labels == own[:, None], axis=1)
    same_ratio = float(np.mean(same))
    if labels is None:
        return same_ratio, None
    labels = np.asarray(labels, dtype=np.int64)
    true = labels[sids]
    qualified = int(np.sum(same))
    if qualified == 0:
        return same_ratio, 0.0
    correct_ratio = float(np.sum(same & (own == true)) / qualified)
    return same_ratio, correct_ratio


def open_set_scores(os_star: float, unk: float, num_known: int) -> OdaScores:
    """HOS = harmonic mean of known-class and unknown accuracy; OS is the
    (|C_s|+1)-way weighted mean counting unknown as one extra class.
    Inputs may be on the 0-1 or 0-100 scale; outputs match the inputs."""
    if os_star < 0 or unk < 0:
        raise ConfigError("accuracies must be non-negative")
    if num_known < 1:
        raise ConfigError("need at least one known class")
    total = os_star + unk
    hos = 0.0 if total == 0 else 2.0 * os_star * unk / total
    os_val = (num_known * os_star) / (num_known + 1) + unk / (num_known + 1)
    return OdaScores(os_star=float(os_star), unk=float(unk), hos=float(hos),
                     os=float(os_val), num_known_classes=int(num_known))


def decision_grid(model: MlpModel, x_range=(-1.5, 2.5), y_range=(-1.5, 2.0),
                  resolution: int = 101):
    """Predicted label at each node of a regular grid, for boundary plots.

    Returns (xs, ys, labels) with labels[i, j] the prediction at
    (xs[j], ys[i]); rows scan y, columns scan x.
    """
    if model.d_in != 2:
        raise ShapeError("decision grids are defined for 2-D inputs only")
    if resolution < 2:
        raise ConfigError("resolution must be >= 2")
    xs = np.linspace(x_range[0], x_range[1], resolution)
    ys = np.linspace(y_range[0], y_range[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    labels = predict_labels(model, pts).reshape(resolution, resolution)
    return xs, ys, labels


def save_grid_csv(path, xs, ys, labels) -> None:
    lines = ["x,y,label"]
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            lines.append(f"{repr(float(x))},{repr(float(y))},{int(labels[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n")


def evaluate_model(model: MlpModel, X, labels, num_classes: int) -> EvalReport:
    pred = predict_labels(model, X)
    return classification_report(pred, labels, num_classes)


def build_report(model: MlpModel, X, labels, num_classes: int,
                 tau: float = SND_TAU) -> dict:
    """Full evaluation dict with the fixed key set accuracy, per_class,
    snd, ratios, hos, os. Keys that cannot be computed are null: accuracy
    needs labels, ratios need more than 3 samples, hos/os need unknown
    (-1) samples in the truth. The model never rejects, so its unknown
    accuracy is 0 by construction."""
    X = as_matrix(X, "X")
    labels = np.asarray(labels, dtype=np.int64)
    cache = forward(model, X)
    pred = np.argmax(cache.P, axis=1)
    report = {"accuracy": None, "per_class": None, "snd": None,
              "ratios": None, "hos": None, "os": None}
    if np.any(labels >= 0):
        er = classification_report(pred, labels, num_classes)
        report["accuracy"] = er.accuracy
        report["per_class"] = er.to_dict()["per_class"]
    if X.shape[0] >= 2:
        report["snd"] = snd_score(cache.P, tau=tau)
    if X.shape[0] > RATIO_K:
        bank = MemoryBank(mode="full", capacity=X.shape[0],
                          feat_dim=model.h_feat, n_classes=model.n_classes)
        bank.update(np.arange(X.shape[0]), cache.features, cache.P)
        has_labels = bool(np.any(labels >= 0))
        same, correct = agreement_ratios(bank, labels if has_labels else None)
        report["ratios"] = {"same": same, "correct": correct}
    if np.any(labels < 0) and np.any(labels >= 0):
        known = labels >= 0
        per_known = classification_report(pred[known], labels[known], num_classes)
        scores = open_set_scores(per_known.mean_per_class, 0.0, num_classes)
        report["hos"] = scores.hos
        report["os"] = scores.os
    return report


def write_report_json(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
