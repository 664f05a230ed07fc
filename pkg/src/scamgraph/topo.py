"""Per-node topology features and z-score normalization.

Column order (``FEATURE_NAMES``) is fixed and versioned by
``FEATURE_ORDER_VERSION``; serialized artifacts carry the tag and consumers
refuse a mismatch.

The single-node functions (``degree_features``, ``reachability_counts``, ...)
walk the graph directly and are the reference path. ``assemble_features``
computes the same quantities for every node at once with blocked
multi-source BFS over the sparse adjacency.
"""
from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .ingest import TxGraph

log = logging.getLogger(__name__)

FEATURE_ORDER_VERSION = "topo13-v1"
FEATURE_NAMES = (
    "in_degree",
    "out_degree",
    "total_degree",
    "pagerank",
    "hits_hub",
    "hits_authority",
    "in_reach",
    "out_reach",
    "in_sp_max",
    "in_sp_sum",
    "out_sp_max",
    "out_sp_sum",
    "log_wei_throughput",
)
N_FEATURES = len(FEATURE_NAMES)

STD_FLOOR = 1e-12


class MissingNodeError(KeyError):
    pass


def _check(g: TxGraph, v: str) -> None:
    if v not in g.nodes:
        raise MissingNodeError(v)


def degree_features(g: TxGraph, v: str) -> tuple[int, int, int]:
    _check(g, v)
    i = len(g.predecessors[v])
    o = len(g.successors[v])
    return i, o, i + o


# -- link analysis -----------------------------------------------------------

@dataclass
class PageRankResult:
    scores: dict[str, float]
    converged: bool
    iterations: int


@dataclass
class HitsResult:
    hub: dict[str, float]
    authority: dict[str, float]
    converged: bool
    iterations: int
    no_edges: bool = False


def pagerank_vector(adj: sp.spmatrix, damping: float = 0.85, tol: float = 1e-10,
                    max_iter: int = 200) -> tuple[np.ndarray, bool, int]:
    n = adj.shape[0]
    if n == 0:
        raise ValueError("pagerank of an empty graph")
    out = np.asarray(adj.sum(axis=1)).ravel()
    dangling = out == 0
    inv_out = np.divide(1.0, out, out=np.zeros(n), where=~dangling)
    at = sp.csr_matrix(adj.T)
    x = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        x_new = damping * (at @ (x * inv_out) + x[dangling].sum() / n) + (1.0 - damping) / n
        x_new /= x_new.sum()
        delta = np.abs(x_new - x).sum()
        x = x_new
        if delta < tol:
            return x, True, it
    log.warning("pagerank did not converge in %d iterations (last L1 change %.3g)", max_iter, delta)
    return x, False, max_iter


def pagerank(g: TxGraph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200) -> PageRankResult:
    """Power-iteration PageRank on the unweighted link structure.

    Dangling mass is spread uniformly. Converges when the L1 change of the
    score vector drops below ``tol``; otherwise the last iterate is returned
    with ``converged=False``.
    """
    x, ok, it = pagerank_vector(g.adjacency, damping, tol, max_iter)
    return PageRankResult(dict(zip(g.addresses, x.tolist())), ok, it)


def hits_vectors(adj: sp.spmatrix, tol: float = 1e-10,
                 max_iter: int = 200) -> tuple[np.ndarray, np.ndarray, bool, int]:
    n = adj.shape[0]
    if n == 0:
        raise ValueError("hits of an empty graph")
    if adj.nnz == 0:
        return np.zeros(n), np.zeros(n), False, 0
    a_csr = sp.csr_matrix(adj)
    at = sp.csr_matrix(adj.T)
    h = np.full(n, 1.0 / math.sqrt(n))
    a = np.zeros(n)
    for it in range(1, max_iter + 1):
        a_new = at @ h
        a_new /= np.linalg.norm(a_new)
        h_new = a_csr @ a_new
        h_new /= np.linalg.norm(h_new)
        delta = np.abs(a_new - a).sum() + np.abs(h_new - h).sum()
        a, h = a_new, h_new
        if delta < tol:
            return h, a, True, it
    log.warning("hits did not converge in %d iterations (last change %.3g)", max_iter, delta)
    return h, a, False, max_iter


def hits(g: TxGraph, tol: float = 1e-10, max_iter: int = 200) -> HitsResult:
    """Hub/authority scores, each vector L2-normalized every step.

    An edgeless graph returns all-zero vectors with ``no_edges=True``.
    """
    h, a, ok, it = hits_vectors(g.adjacency, tol, max_iter)
    return HitsResult(
        hub=dict(zip(g.addresses, h.tolist())),
        authority=dict(zip(g.addresses, a.tolist())),
        converged=ok,
        iterations=it,
        no_edges=g.n_edges == 0,
    )


# -- reachability and hop distances ------------------------------------------

def _bfs_hops(neighbors: dict[str, list[str]], v: str) -> dict[str, int]:
    dist = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        for w in neighbors[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    del dist[v]
    return dist


def reachability_counts(g: TxGraph, v: str) -> tuple[int, int]:
    """(inbound, outbound) number of other nodes that reach / are reached by ``v``."""
    _check(g, v)
    return len(_bfs_hops(g.predecessors, v)), len(_bfs_hops(g.successors, v))


def shortest_path_stats(g: TxGraph, v: str) -> tuple[int, int, int, int]:
    """(in_max, in_sum, out_max, out_sum) of BFS hop distances; unreachable nodes ignored."""
    _check(g, v)
    d_in = _bfs_hops(g.predecessors, v).values()
    d_out = _bfs_hops(g.successors, v).values()
    return (max(d_in, default=0), sum(d_in), max(d_out, default=0), sum(d_out))


def hop_stats(adj: sp.spmatrix, block_budget: int = 4_000_000) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reach count, max hop distance and hop-distance sum from every source.

    Runs BFS from a block of sources at once: the frontier is a dense
    (sources x nodes) 0/1 matrix advanced by one sparse product per level.
    """
    n = adj.shape[0]
    reach = np.zeros(n, dtype=np.int64)
    dmax = np.zeros(n, dtype=np.int64)
    dsum = np.zeros(n, dtype=np.int64)
    if n == 0:
        return reach, dmax, dsum
    at = sp.csr_matrix(adj.T, dtype=np.float64)
    block = max(1, min(n, block_budget // n))
    for start in range(0, n, block):
        src = np.arange(start, min(n, start + block))
        b = len(src)
        visited = np.zeros((n, b), dtype=bool)
        visited[src, np.arange(b)] = True
        frontier = visited.astype(np.float64)
        level = 0
        while True:
            level += 1
            new = (at @ frontier > 0) & ~visited
            counts = new.sum(axis=0)
            if not counts.any():
                break
            visited |= new
            reach[src] += counts
            dsum[src] += level * counts
            dmax[src[counts > 0]] = level
            frontier = new.astype(np.float64)
    return reach, dmax, dsum


def value_throughput(g: TxGraph, v: str) -> float:
    """log10(1 + total Wei in and out of ``v``); a self-loop counts both ways."""
    _check(g, v)
    w = sum(g.edges[(u, v)] for u in g.predecessors[v])
    w += sum(g.edges[(v, u)] for u in g.successors[v])
    return math.log10(1 + w)


# -- feature matrix ----------------------------------------------------------

@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def to_json(self) -> list[dict]:
        return [{"mean": float(m), "std": float(s)} for m, s in zip(self.mean, self.std)]

    @classmethod
    def from_json(cls, items: list[dict]) -> "NormStats":
        if len(items) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} norm_stats entries, got {len(items)}")
        return cls(np.array([d["mean"] for d in items], dtype=float),
                   np.array([d["std"] for d in items], dtype=float))


@dataclass
class FeatureMatrix:
    addresses: list[str]
    values: np.ndarray
    norm_stats: NormStats | None = None
    feature_order_version: str = FEATURE_ORDER_VERSION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, N_FEATURES)
        if len(self.addresses) != self.values.shape[0]:
            raise ValueError("address count does not match feature rows")

    def row(self, address: str) -> np.ndarray:
        return self.values[self.addresses.index(address)]

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(zip(self.addresses, self.values))


def assemble_features(g: TxGraph, damping: float = 0.85, tol: float = 1e-10,
                      max_iter: int = 200) -> FeatureMatrix:
    """Raw 13-column topology features for every node, rows in address order."""
    if g.n_nodes == 0:
        raise ValueError("cannot featurize an empty graph")
    adj = g.adjacency
    n = g.n_nodes
    indeg = np.asarray(adj.sum(axis=0)).ravel()
    outdeg = np.asarray(adj.sum(axis=1)).ravel()
    pr, pr_ok, pr_it = pagerank_vector(adj, damping, tol, max_iter)
    hub, auth, hits_ok, hits_it = hits_vectors(adj, tol, max_iter)
    out_reach, out_max, out_sum = hop_stats(adj)
    in_reach, in_max, in_sum = hop_stats(adj.T)

    idx = g.index
    wei = [0] * n
    for (u, v), w in g.edges.items():
        wei[idx[u]] += w
        wei[idx[v]] += w
    throughput = np.array([math.log10(1 + w) for w in wei])

    values = np.column_stack([
        indeg, outdeg, indeg + outdeg, pr, hub, auth,
        in_reach, out_reach, in_max, in_sum, out_max, out_sum, throughput,
    ]).astype(np.float64)
    meta = {
        "pagerank_converged": pr_ok, "pagerank_iterations": pr_it,
        "hits_converged": hits_ok, "hits_iterations": hits_it,
    }
    return FeatureMatrix(list(g.addresses), values, meta=meta)


def fit_normalize(m: FeatureMatrix) -> FeatureMatrix:
    if m.values.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit normalization")
    stats = NormStats(m.values.mean(axis=0), m.values.std(axis=0))
    return apply_normalize(m, stats)


def apply_normalize(m: FeatureMatrix, stats: NormStats) -> FeatureMatrix:
    ok = stats.std >= STD_FLOOR
    scale = np.where(ok, stats.std, 1.0)
    z = np.where(ok, (m.values - stats.mean) / scale, 0.0)
    return FeatureMatrix(list(m.addresses), z, stats, m.feature_order_version, dict(m.meta))


def write_feature_csv(m: FeatureMatrix, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["address"] + [f"f{i}" for i in range(N_FEATURES)])
    for a, row in zip(m.addresses, m.values):
        w.writerow([a] + [repr(float(x)) for x in row])


def read_feature_csv(fh: TextIO) -> tuple[list[str], np.ndarray]:
    reader = csv.reader(fh)
    header = next(reader)
    if header != ["address"] + [f"f{i}" for i in range(N_FEATURES)]:
        raise ValueError(f"unexpected feature CSV header {header}")
    addrs, rows = [], []
    for rec in reader:
        addrs.append(rec[0])
        rows.append([float(x) for x in rec[1:]])
    return addrs, np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES)
