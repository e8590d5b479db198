"""Memory bank of target features and their predictions.

Two layouts: ``full`` keeps one slot per dataset sample (slot index ==
sample id), ``ring`` is a bounded buffer where new rows overwrite the
oldest ones. Retrieval is K-nearest-neighbor by cosine similarity with
ties broken toward the lower sample id, so results are deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InsufficientDataError, InvalidInputError, ShapeError
from .numerics import as_matrix, require_simplex_rows

MODES = ("full", "ring")


@dataclass
class NeighborSet:
    """Index sets used by the neighborhood objectives for one anchor sample:
    the K retrieved nearest neighbors and the rest of the mini-batch."""

    anchor: int
    close: np.ndarray
    background: np.ndarray

    def __post_init__(self):
        self.close = np.asarray(self.close, dtype=np.int64)
        self.background = np.asarray(self.background, dtype=np.int64)
        if self.anchor in self.close:
            raise InvalidInputError("anchor may not be its own close neighbor")
        if self.anchor in self.background:
            raise InvalidInputError("anchor may not be in the background set")
        if not len(self.close) < len(self.background):
            raise InvalidInputError("close set must be smaller than background set")


class MemoryBank:
    """Aligned feature and prediction storage with cosine KNN retrieval."""

    def __init__(self, mode: str, capacity: int, feat_dim: int, n_classes: int):
        mode = str(mode).lower()
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.mode = mode
        self.capacity = int(capacity)
        self.features = np.zeros((capacity, feat_dim))
        self.predictions = np.zeros((capacity, n_classes))
        self.sample_ids = np.full(capacity, -1, dtype=np.int64)
        self.cursor = 0
        self.filled = 0

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.predictions.shape[1]

    def update(self, sample_ids, features, predictions) -> "MemoryBank":
        """Write a batch of rows. Full mode overwrites the slots addressed by
        sample id; ring mode appends at the cursor, evicting the oldest rows."""
        ids = np.asarray(sample_ids, dtype=np.int64).ravel()
        feats = as_matrix(features, "features")
        preds = require_simplex_rows(predictions, tol=1e-6, name="predictions")
        if not (len(ids) == feats.shape[0] == preds.shape[0]):
            raise ShapeError("sample_ids, features and predictions must be row-aligned")
        if feats.shape[1] != self.feat_dim or preds.shape[1] != self.n_classes:
            raise ShapeError("row width does not match bank layout")
        if np.any(ids < 0):
            raise InvalidInputError("sample ids must be non-negative")

        if self.mode == "full":
            if np.any(ids >= self.capacity):
                raise IndexError("sample id exceeds full-mode bank capacity")
            self.features[ids] = feats
            self.predictions[ids] = preds
            self.sample_ids[ids] = ids
            self.filled = int(np.sum(self.sample_ids >= 0))
        else:
            for j in range(len(ids)):
                slot = self.cursor
                self.features[slot] = feats[j]
                self.predictions[slot] = preds[j]
                self.sample_ids[slot] = ids[j]
                self.cursor = (slot + 1) % self.capacity
            self.filled = min(self.filled + len(ids), self.capacity)
        return self

    def occupied(self) -> np.ndarray:
        """Slot indices currently holding data, sorted by stored sample id."""
        slots = np.nonzero(self.sample_ids >= 0)[0]
        return slots[np.argsort(self.sample_ids[slots], kind="stable")]

    def knn(self, query_feature, k: int, exclude_id: int | None = None):
        """K stored rows maximizing cosine similarity to the query.

        Returns (sample ids, prediction snapshots). Ties go to the lower
        sample id; zero-norm rows get similarity -inf and are effectively
        never selected.
        """
        q = np.asarray(query_feature, dtype=np.float64).ravel()
        ids, _, preds = self.knn_batch(q[None, :], k,
                                       None if exclude_id is None else [exclude_id])
        return ids[0], preds[0]

    def knn_batch(self, queries, k: int, exclude_ids=None):
        """Vectorized KNN for a batch of query features.

        Returns (ids (n,k), features (n,k,h), predictions (n,k,C)); the
        feature/prediction arrays are value snapshots detached from the bank.
        """
        if k < 1:
            raise ConfigError("k must be >= 1")
        Q = as_matrix(queries, "queries")
        if Q.shape[1] != self.feat_dim:
            raise ShapeError("query width does not match bank features")
        slots = self.occupied()
        if self.filled <= k:
            raise InsufficientDataError(f"bank holds {self.filled} rows, need more than k={k}")
        cand_ids = self.sample_ids[slots]
        cand_feats = self.features[slots]

        norms = np.linalg.norm(cand_feats, axis=1)
        qnorms = np.linalg.norm(Q, axis=1)
        sims = Q @ cand_feats.T
        sims /= np.outer(np.where(qnorms > 0, qnorms, 1.0),
                         np.where(norms > 0, norms, 1.0))
        sims[:, norms == 0.0] = -np.inf
        sims[qnorms == 0.0, :] = -np.inf

        # candidates are pre-sorted by id, so sorting on (-sim, position)
        # breaks similarity ties toward the lower sample id; argpartition
        # avoids a full row sort, and rows whose tie group straddles the
        # k-th place fall back to an exact stable sort of the tie group
        neg = -sims
        if exclude_ids is not None:
            excl = np.asarray(exclude_ids, dtype=np.int64).ravel()
            if excl.size != Q.shape[0]:
                raise ShapeError("exclude_ids must supply one id per query row")
            # cand_ids is sorted, so each query's excluded id sits at one
            # slot; NaN sorts after +inf, keeping excluded rows out even
            # when every remaining similarity is -inf
            pos = np.minimum(np.searchsorted(cand_ids, excl), cand_ids.size - 1)
            hit = np.nonzero(cand_ids[pos] == excl)[0]
            neg[hit, pos[hit]] = np.nan
        part = np.argpartition(neg, k - 1, axis=1)[:, :k]
        vals = np.take_along_axis(neg, part, axis=1)
        cut = vals.max(axis=1, keepdims=True)
        perm = np.lexsort((part, vals), axis=1)
        order = np.take_along_axis(part, perm, axis=1)
        for r in np.nonzero(np.sum(neg <= cut, axis=1) > k)[0]:
            cand = np.nonzero(neg[r] <= cut[r, 0])[0]
            order[r] = cand[np.argsort(neg[r, cand], kind="stable")[:k]]
        top_ids = cand_ids[order]
        top_feats = cand_feats[order]
        top_preds = self.predictions[slots][order]
        return top_ids, top_feats, top_preds

    def snapshot(self):
        """(ids, features, predictions) copies of the occupied rows, id order."""
        slots = self.occupied()
        return (self.sample_ids[slots].copy(), self.features[slots].copy(),
                self.predictions[slots].copy())

    def dump_csv(self, path) -> None:
        """One row per occupied slot: id, feature values, prediction values."""
        ids, feats, preds = self.snapshot()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id"] + [f"f{j}" for j in range(self.feat_dim)]
                       + [f"p{j}" for j in range(self.n_classes)])
            for i in range(len(ids)):
                w.writerow([int(ids[i])] + [repr(float(v)) for v in feats[i]]
                           + [repr(float(v)) for v in preds[i]])


def bank_init(mode: str, capacity: int, feat_dim: int, n_classes: int) -> MemoryBank:
    """Construct an empty bank (full mode expects capacity == dataset size)."""
    return MemoryBank(mode, capacity, feat_dim, n_classes)
