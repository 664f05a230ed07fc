"""Contract-level dataset: EOA-neighborhood feature aggregation and the
shared-EOA contract graph."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .ingest import CONTRACT, EOA, TxGraph
from .topo import FEATURE_ORDER_VERSION, FeatureMatrix, N_FEATURES


class KindError(ValueError):
    pass


@dataclass
class ContractDataset:
    """Contracts in address order with aggregated features.

    ``labels`` entries are 0, 1 or None (unlabeled). ``edges`` maps index
    pairs (i, j), i < j, to the number of EOAs the two contracts share.
    """

    contracts: list[str]
    features: np.ndarray
    labels: list[int | None]
    edges: dict[tuple[int, int], int] = field(default_factory=dict)
    feature_order_version: str = FEATURE_ORDER_VERSION

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, N_FEATURES)
        if not (len(self.contracts) == self.features.shape[0] == len(self.labels)):
            raise ValueError("contracts, features and labels disagree in length")
        for (i, j), w in self.edges.items():
            if not (0 <= i < j < len(self.contracts)) or w < 1:
                raise ValueError(f"bad contract edge ({i}, {j}) -> {w}")

    def __len__(self) -> int:
        return len(self.contracts)

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.array([i for i, y in enumerate(self.labels) if y is not None], dtype=np.int64)

    def label_array(self, indices) -> np.ndarray:
        return np.array([self.labels[i] for i in indices], dtype=np.int64)

    def adjacency(self) -> sp.csr_matrix:
        """Binary symmetric contract adjacency without self-loops."""
        n = len(self.contracts)
        if not self.edges:
            return sp.csr_matrix((n, n), dtype=np.float64)
        ij = np.array(sorted(self.edges), dtype=np.int64)
        rows = np.concatenate([ij[:, 0], ij[:, 1]])
        cols = np.concatenate([ij[:, 1], ij[:, 0]])
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a

    def to_json(self) -> dict:
        return {
            "contracts": list(self.contracts),
            "features": [[float(x) for x in row] for row in self.features],
            "labels": list(self.labels),
            "edges": [{"a_index": i, "b_index": j, "shared_count": w} for (i, j), w in sorted(self.edges.items())],
            "feature_order_version": self.feature_order_version,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ContractDataset":
        return cls(
            contracts=list(doc["contracts"]),
            features=np.array(doc["features"], dtype=np.float64).reshape(-1, N_FEATURES),
            labels=[None if y is None else int(y) for y in doc["labels"]],
            edges={(int(e["a_index"]), int(e["b_index"])): int(e["shared_count"]) for e in doc["edges"]},
            feature_order_version=doc["feature_order_version"],
        )


def eoa_neighborhood(g: TxGraph, c: str) -> set[str]:
    if g.nodes.get(c) != CONTRACT:
        raise KindError(f"{c} is not a contract node of the graph")
    nbrs = set(g.successors[c]) | set(g.predecessors[c])
    return {a for a in nbrs if g.nodes[a] == EOA}


def contract_addresses(g: TxGraph) -> list[str]:
    return [a for a in g.addresses if g.nodes[a] == CONTRACT]


def aggregate_contract_features(g: TxGraph, m: FeatureMatrix,
                                labels: Mapping[str, int] | None = None) -> ContractDataset:
    """Replace each contract's row with the mean over its EOA neighbors.

    Contracts with no EOA neighbor keep their own row.
    """
    labels = labels or {}
    rows = m.as_dict()
    contracts = contract_addresses(g)
    feats = np.empty((len(contracts), N_FEATURES))
    for k, c in enumerate(contracts):
        nbrs = sorted(eoa_neighborhood(g, c))
        if nbrs:
            feats[k] = np.mean([rows[e] for e in nbrs], axis=0)
        else:
            feats[k] = rows[c]
    return ContractDataset(
        contracts=contracts,
        features=feats,
        labels=[labels.get(c) for c in contracts],
        feature_order_version=m.feature_order_version,
    )


def project_contract_graph(g: TxGraph, contracts: list[str] | None = None) -> dict[tuple[int, int], int]:
    """Undirected contract pairs weighted by the size of their shared EOA set."""
    if contracts is None:
        contracts = contract_addresses(g)
    pos = {c: i for i, c in enumerate(contracts)}
    # invert: EOA -> contracts touching it
    touching: dict[str, list[int]] = {}
    for c in contracts:
        for e in eoa_neighborhood(g, c):
            touching.setdefault(e, []).append(pos[c])
    counts: dict[tuple[int, int], int] = {}
    for members in touching.values():
        members.sort()
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                key = (members[a], members[b])
                counts[key] = counts.get(key, 0) + 1
    return {k: counts[k] for k in sorted(counts)}


def build_contract_dataset(g: TxGraph, m: FeatureMatrix,
                           labels: Mapping[str, int] | None = None) -> ContractDataset:
    ds = aggregate_contract_features(g, m, labels)
    ds.edges = project_contract_graph(g, ds.contracts)
    ds.__post_init__()
    return ds
