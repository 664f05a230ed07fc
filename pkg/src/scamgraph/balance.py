"""Class-imbalance handling: SMOTE, ENN cleaning, and minority-centered
ego-subgraph sampling for GCN training."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from .contractize import ContractDataset

log = logging.getLogger(__name__)

ORIGINAL = "original"
SYNTHETIC = "synthetic"


class ResampleError(ValueError):
    pass


@dataclass
class LabeledSamples:
    """Rows for resampling. ``source`` carries a caller-chosen id per original
    row (default: row position) and -1 for synthetic rows."""

    features: np.ndarray
    labels: np.ndarray
    provenance: list[str] | None = None
    source: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.provenance is None:
            self.provenance = [ORIGINAL] * len(self.labels)
        if self.source is None:
            self.source = np.arange(len(self.labels), dtype=np.int64)
        self.source = np.asarray(self.source, dtype=np.int64)
        if not (self.features.shape[0] == len(self.labels) == len(self.provenance) == len(self.source)):
            raise ValueError("features, labels, provenance and source disagree in length")

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> dict[int, int]:
        return {c: int((self.labels == c).sum()) for c in (0, 1)}

    def subset(self, keep: np.ndarray) -> "LabeledSamples":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        return LabeledSamples(self.features[keep], self.labels[keep], [self.provenance[i] for i in keep],
                              self.source[keep])


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)


def knn_indices(x: np.ndarray, k: int, block: int = 64) -> np.ndarray:
    """k nearest neighbors of every row among the other rows.

    Squared Euclidean distance; ties go to the lower row index.
    """
    n = x.shape[0]
    if k >= n:
        raise ValueError(f"k={k} needs at least {k + 1} rows, got {n}")
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        rows = np.arange(start, min(n, start + block))
        d = _sq_dists(x[rows], x)
        d[np.arange(len(rows)), rows] = np.inf
        out[rows] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def minority_label(labels: np.ndarray) -> int:
    n1 = int((labels == 1).sum())
    n0 = len(labels) - n1
    return 1 if n1 <= n0 else 0


def smote(s: LabeledSamples, k: int = 5, target_ratio: float = 1.0, rng_seed: int = 0) -> LabeledSamples:
    """Append synthetic minority rows interpolated toward minority neighbors.

    Generates ceil(target_ratio * n_majority - n_minority) rows. Seeds cycle
    through the minority rows in order; each picks one of its k nearest
    minority neighbors uniformly and a uniform interpolation weight.
    """
    mino = minority_label(s.labels)
    min_idx = np.flatnonzero(s.labels == mino)
    n_min, n_maj = len(min_idx), len(s) - len(min_idx)
    if n_min < 2:
        raise ResampleError(f"cannot oversample: minority class has {n_min} row(s)")
    n_new = math.ceil(target_ratio * n_maj - n_min - 1e-9)
    if n_new <= 0:
        return LabeledSamples(s.features.copy(), s.labels.copy(), list(s.provenance), s.source.copy())
    k = min(k, n_min - 1)
    xm = s.features[min_idx]
    nn = knn_indices(xm, k)
    rng = np.random.default_rng(rng_seed)
    seeds = np.arange(n_new) % n_min
    picks = nn[seeds, rng.integers(0, k, size=n_new)]
    lam = rng.random(n_new)[:, None]
    synth = xm[seeds] + lam * (xm[picks] - xm[seeds])
    return LabeledSamples(
        np.vstack([s.features, synth]),
        np.concatenate([s.labels, np.full(n_new, mino)]),
        list(s.provenance) + [SYNTHETIC] * n_new,
        np.concatenate([s.source, np.full(n_new, -1)]),
    )


def enn_mask(x: np.ndarray, y: np.ndarray, k: int = 3) -> np.ndarray:
    """True for rows to drop: their k-NN majority vote disagrees with their label."""
    nn = knn_indices(x, k)
    votes_for_one = y[nn].sum(axis=1)
    vote = np.where(2 * votes_for_one > k, 1, np.where(2 * votes_for_one < k, 0, -1))
    return (vote >= 0) & (vote != y)


def enn(s: LabeledSamples, k: int = 3) -> LabeledSamples:
    """Edited nearest neighbors, all removal decisions taken against the input set."""
    if len(s) <= k:
        raise ResampleError(f"ENN with k={k} needs more than {k} rows, got {len(s)}")
    drop = enn_mask(s.features, s.labels, k)
    if drop.all():
        raise ResampleError("ENN removed every row")
    return s.subset(~drop)


def smote_enn(s: LabeledSamples, k_smote: int = 5, k_enn: int = 3, target_ratio: float = 1.0,
              rng_seed: int = 0) -> tuple[LabeledSamples, dict]:
    before = s.class_counts()
    over = smote(s, k_smote, target_ratio, rng_seed)
    after_smote = over.class_counts()
    cleaned = enn(over, k_enn)
    report = {"before": before, "after_smote": after_smote, "after_enn": cleaned.class_counts()}
    log.info("smote-enn class counts %s", report)
    return cleaned, report


# -- GCN subgraph sampling ---------------------------------------------------

@dataclass
class EgoBatch:
    """Induced ego subgraph; ``node_indices[0]`` is the center."""

    center: int
    node_indices: np.ndarray
    adjacency: sp.csr_matrix
    center_label: int | None

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Induced undirected edges as global index pairs (i < j)."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        pairs = [(int(self.node_indices[r]), int(self.node_indices[c])) for r, c in zip(coo.row, coo.col)]
        return sorted((min(p), max(p)) for p in pairs)


def ego_subgraph(ds: ContractDataset, center: int, radius: int = 2,
                 adj: sp.csr_matrix | None = None) -> EgoBatch:
    adj = ds.adjacency() if adj is None else adj
    if not 0 <= center < adj.shape[0]:
        raise IndexError(f"center {center} out of range")
    dist = {center: 0}
    queue = deque([center])
    while queue:
        u = queue.popleft()
        if dist[u] == radius:
            continue
        for w in adj.indices[adj.indptr[u]:adj.indptr[u + 1]]:
            w = int(w)
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    members = np.array([center] + sorted(set(dist) - {center}), dtype=np.int64)
    sub = adj[members][:, members]
    sub = sp.csr_matrix(sub)
    sub.sort_indices()
    return EgoBatch(center, members, sub, ds.labels[center])


def balanced_batch_sampler(ds: ContractDataset, batch_size: int, minority_fraction: float = 0.5,
                           radius: int = 2, rng_seed: int = 0,
                           candidates: np.ndarray | None = None,
                           n_batches: int | None = None) -> Iterator[list[EgoBatch]]:
    """Yield batches of ego subgraphs with a fixed share of minority centers.

    Each batch holds ceil(minority_fraction * batch_size) minority centers
    and the rest majority centers, drawn uniformly with replacement from the
    labeled ``candidates`` (default: every labeled contract).
    """
    if candidates is None:
        candidates = ds.labeled_indices
    candidates = np.asarray(candidates, dtype=np.int64)
    y = ds.label_array(candidates)
    mino = minority_label(y)
    pool_min = candidates[y == mino]
    pool_maj = candidates[y != mino]
    if len(pool_min) == 0 or len(pool_maj) == 0:
        raise ResampleError("balanced sampling needs both classes among the candidates")
    n_min = math.ceil(minority_fraction * batch_size - 1e-9)
    n_maj = batch_size - n_min
    adj = ds.adjacency()
    cache: dict[int, EgoBatch] = {}
    rng = np.random.default_rng(rng_seed)
    produced = 0
    while n_batches is None or produced < n_batches:
        centers = np.concatenate([rng.choice(pool_min, size=n_min), rng.choice(pool_maj, size=n_maj)])
        batch = []
        for c in centers.tolist():
            if c not in cache:
                cache[c] = ego_subgraph(ds, c, radius, adj)
            batch.append(cache[c])
        produced += 1
        yield batch
