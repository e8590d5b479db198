"""Training loops: source pretraining, neighbor-based target adaptation,
and the decay-exponent sweep with SND-based selection.

The adaptation loop follows a fixed per-iteration order: forward the
batch, write its features and predictions into the memory bank, then
retrieve each sample's nearest neighbors (never itself), evaluate the
configured objective, and take one SGD step. The bank is seeded with a
full forward pass before the first iteration, so retrieval always sees
every sample (full mode) or the most recent writes (ring mode).

Target labels feed evaluation reports only; the gradient path never
touches them. Every run resets the momentum buffers first and draws all
shuffles from one seeded generator, so identical (model, data, config)
reproduce bit-identical histories and parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bank import MemoryBank
from .datasets import Dataset
from .errors import ConfigError, InsufficientDataError, InvalidInputError
from .metrics import EvalReport, agreement_ratios, classification_report, snd_score
from .model import MlpModel, backward, forward, sgd_step
from .objectives import (
    attract_disperse_loss,
    bnm_loss,
    cross_entropy_loss,
    disperse_only_loss,
    lambda_schedule,
    mi_loss,
    nc_loss,
)

OBJECTIVES = ("AaD", "AttractOnly", "DisperseOnly", "AaDNoDecay", "MI", "BNM", "NC")

# objectives whose gradient uses retrieved neighbor predictions
_NEEDS_NEIGHBORS = {"AaD", "AttractOnly", "AaDNoDecay", "NC"}


@dataclass
class AdaptConfig:
    k: int = 4
    beta: float = 0.25
    batch_size: int = 64
    epochs: int = 300
    lr: float = 0.005
    momentum: float = 0.7
    bank_mode: str = "full"
    ring_capacity: int = 0       # ignored unless bank_mode == "ring"
    seed: int = 0
    objective: str = "AaD"
    snd_tau: float = 0.05

    def __post_init__(self):
        self.objective = canonical_objective(self.objective)

    def validate(self) -> None:
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.k < 1 or self.k >= self.batch_size - 1:
            raise ConfigError("k must satisfy 1 <= k < batch_size - 1")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.bank_mode not in ("full", "ring"):
            raise ConfigError(f"unknown bank_mode {self.bank_mode!r}")
        if self.bank_mode == "ring" and self.ring_capacity <= self.k:
            raise ConfigError("ring_capacity must exceed k")
        if self.snd_tau <= 0:
            raise ConfigError("snd_tau must be positive")


def canonical_objective(name: str) -> str:
    for obj in OBJECTIVES:
        if name.lower() == obj.lower():
            return obj
    raise ConfigError(f"unknown objective {name!r}, expected one of {OBJECTIVES}")


@dataclass
class RunHistory:
    """Per-iteration loss and dispersion weight, per-epoch evaluation."""

    loss: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    acc: list = field(default_factory=list)            # None when unlabeled
    snd: list = field(default_factory=list)
    ratio_same: list = field(default_factory=list)
    ratio_correct: list = field(default_factory=list)  # None when unlabeled
    checkpoint_path: str = ""

    def to_dict(self) -> dict:
        out = {
            "loss": self.loss,
            "lambda": self.lam,
            "acc": self.acc,
            "snd": self.snd,
            "ratio_same": self.ratio_same,
            "ratio_correct": self.ratio_correct,
        }
        if self.checkpoint_path:
            out["checkpoint"] = self.checkpoint_path
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def pretrain_source(model: MlpModel, source: Dataset, epochs: int, lr: float,
                    momentum: float = 0.9, seed: int = 0,
                    batch_size: int = 64) -> tuple[MlpModel, EvalReport]:
    """Cross-entropy SGD on labeled source data; the model is updated in
    place and also returned. Reports final source accuracy."""
    if epochs < 0:
        raise ConfigError("epochs must be >= 0")
    if np.any(source.labels < 0):
        raise InvalidInputError("source data must be fully labeled")
    n = len(source)
    bs = min(batch_size, n)
    model.reset_velocity()
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(epochs):
        perm = rng.permutation(n)
        for b in range(n // bs):
            idx = perm[b * bs:(b + 1) * bs]
            cache = forward(model, source.X[idx])
            res = cross_entropy_loss(cache.P, source.labels[idx])
            grads = backward(model, cache, res.grad)
            sgd_step(model, grads, lr, momentum)
    report = classification_report(
        np.argmax(forward(model, source.X).P, axis=1), source.labels, source.num_classes)
    return model, report


def adapt(model: MlpModel, target: Dataset, cfg: AdaptConfig) -> tuple[MlpModel, RunHistory]:
    """Adapt a source-pretrained model to unlabeled target data.

    The recorded lambda is the dispersion weight actually applied
    (0 for AttractOnly, 1 for AaDNoDecay); for objectives without a
    dispersion term it is the schedule value, kept for comparability.
    """
    cfg.validate()
    n = len(target)
    if n < cfg.batch_size:
        raise ConfigError(f"target has {n} samples, need >= batch_size {cfg.batch_size}")

    capacity = n if cfg.bank_mode == "full" else cfg.ring_capacity
    bank = MemoryBank(mode=cfg.bank_mode, capacity=capacity,
                      feat_dim=model.h_feat, n_classes=model.n_classes)
    all_ids = np.arange(n)
    seed_cache = forward(model, target.X)
    bank.update(all_ids, seed_cache.features, seed_cache.P)

    iters_per_epoch = n // cfg.batch_size
    max_iter = max(cfg.epochs * iters_per_epoch, 1)
    has_labels = bool(np.any(target.labels >= 0))
    model.reset_velocity()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    history = RunHistory()
    it = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for b in range(iters_per_epoch):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            cache = forward(model, target.X[idx])
            bank.update(idx, cache.features, cache.P)
            lam = lambda_schedule(it, max_iter, cfg.beta)
            if cfg.objective in _NEEDS_NEIGHBORS:
                _, _, nbr_preds = bank.knn_batch(cache.features, cfg.k, exclude_ids=idx)
            if cfg.objective == "AaD":
                res = attract_disperse_loss(cache.P, nbr_preds, lam)
            elif cfg.objective == "AttractOnly":
                lam = 0.0
                res = attract_disperse_loss(cache.P, nbr_preds, lam)
            elif cfg.objective == "AaDNoDecay":
                lam = 1.0
                res = attract_disperse_loss(cache.P, nbr_preds, lam)
            elif cfg.objective == "DisperseOnly":
                res = disperse_only_loss(cache.P, lam)
            elif cfg.objective == "MI":
                res = mi_loss(cache.P)
            elif cfg.objective == "BNM":
                res = bnm_loss(cache.P, variant="nuclear")
            else:  # NC
                res = nc_loss(cache.P, nbr_preds)
            grads = backward(model, cache, res.grad)
            sgd_step(model, grads, cfg.lr, cfg.momentum)
            history.loss.append(res.value)
            history.lam.append(lam)
            it += 1
        _record_epoch(history, model, target, bank, cfg, has_labels)
    return model, history


def _record_epoch(history, model, target, bank, cfg, has_labels) -> None:
    cache = forward(model, target.X)
    if has_labels:
        report = classification_report(
            np.argmax(cache.P, axis=1), target.labels, target.num_classes)
        history.acc.append(report.accuracy)
    else:
        history.acc.append(None)
    history.snd.append(snd_score(cache.P, tau=cfg.snd_tau))
    try:
        same, correct = agreement_ratios(bank, target.labels if has_labels else None)
        history.ratio_same.append(same)
        history.ratio_correct.append(correct)
    except InsufficientDataError:
        # ring banks smaller than the ratio neighborhood cannot be scored
        history.ratio_same.append(None)
        history.ratio_correct.append(None)


def sweep_beta(model: MlpModel, target: Dataset, betas, base_cfg: AdaptConfig,
               seeds) -> tuple[list, list]:
    """Adapt from the same starting model for every (beta, seed) pair.

    Returns (runs, table): one run row per pair with final SND and
    accuracy, and one table row per beta with seed-averaged values, the
    argmax-SND row flagged (ties go to the smaller beta).
    """
    betas = list(betas)
    seeds = list(seeds)
    if not betas:
        raise ConfigError("betas must be nonempty")
    if not seeds:
        raise ConfigError("seeds must be nonempty")
    runs = []
    for seed in seeds:
        for beta in betas:
            cfg = replace(base_cfg, beta=float(beta), seed=int(seed), objective="AaD")
            _, hist = adapt(model.clone(), target, cfg)
            if not hist.snd:
                raise ConfigError("sweep needs epochs >= 1 to score runs")
            runs.append({"beta": float(beta), "seed": int(seed),
                         "snd": hist.snd[-1], "acc": hist.acc[-1]})
    table = []
    for beta in betas:
        rows = [r for r in runs if r["beta"] == float(beta)]
        accs = [r["acc"] for r in rows if r["acc"] is not None]
        table.append({
            "beta": float(beta),
            "snd": float(np.mean([r["snd"] for r in rows])),
            "acc": float(np.mean(accs)) if accs else None,
            "selected": False,
        })
    best = max(range(len(table)), key=lambda i: (table[i]["snd"], -table[i]["beta"]))
    table[best]["selected"] = True
    return runs, table


def save_sweep_csv(path, table) -> None:
    lines = ["beta,snd,acc,selected"]
    for row in table:
        acc = "" if row["acc"] is None else repr(row["acc"])
        lines.append(f"{repr(row['beta'])},{repr(row['snd'])},{acc},{int(row['selected'])}")
    Path(path).write_text("\n".join(lines) + "\n")
