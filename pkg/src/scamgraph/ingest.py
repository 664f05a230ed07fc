"""Transaction, address-kind and label parsing; transaction graph build and prune.

Files consumed:

    transactions.csv   from_address,to_address,value_wei,block_timestamp
    kinds.csv          address,kind        (kind in {eoa, contract})
    labels.csv         address,label       (label in {0, 1}, 1 = scam)

Parallel transactions between the same ordered pair collapse into one edge
whose weight is the summed Wei value.
"""
from __future__ import annotations

import csv
import json
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

EOA = "eoa"
CONTRACT = "contract"
KINDS = (EOA, CONTRACT)

MAX_WEI = 2**128
TX_HEADER = ("from_address", "to_address", "value_wei", "block_timestamp")

_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")


class IngestError(ValueError):
    """Base class for data errors raised while reading input files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(IngestError):
    pass


class RowError(IngestError):
    pass


class ValueOverflowError(IngestError):
    pass


class LabelConflictError(IngestError):
    def __init__(self, address: str, line: int | None = None):
        self.address = address
        super().__init__(f"conflicting duplicate entries for {address}", line)


@dataclass(frozen=True)
class TxRecord:
    from_address: str
    to_address: str
    value_wei: int
    timestamp: int


def normalize_address(raw: str, line: int | None = None) -> str:
    addr = raw.strip().lower()
    if not _ADDRESS_RE.match(addr):
        raise RowError(f"malformed address {raw!r}", line)
    return addr


def _reader(stream: TextIO | Iterable[str], required: Sequence[str]) -> csv.DictReader:
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    missing = [c for c in required if c not in header]
    if missing:
        raise FormatError(f"missing column(s) {', '.join(missing)}; got header {header}", 1)
    return reader


def iter_transactions(stream: TextIO | Iterable[str]) -> Iterator[TxRecord]:
    reader = _reader(stream, TX_HEADER)
    for row in reader:
        line = reader.line_num
        if any(row.get(c) is None for c in TX_HEADER):
            raise FormatError("row has too few fields", line)
        if not row["to_address"].strip():
            raise RowError("empty to_address (contract creation rows are not supported)", line)
        src = normalize_address(row["from_address"], line)
        dst = normalize_address(row["to_address"], line)
        raw_value = row["value_wei"].strip()
        if not raw_value.isdigit():
            raise RowError(f"value_wei is not a non-negative decimal integer: {raw_value!r}", line)
        value = int(raw_value)
        if value >= MAX_WEI:
            raise ValueOverflowError(f"value_wei {raw_value} does not fit in 128 bits", line)
        try:
            ts = int(row["block_timestamp"].strip())
        except ValueError:
            raise RowError(f"bad block_timestamp {row['block_timestamp']!r}", line) from None
        yield TxRecord(src, dst, value, ts)


def parse_transactions(stream: TextIO | Iterable[str]) -> list[TxRecord]:
    return list(iter_transactions(stream))


def _load_map(stream, value_col: str, parse_value) -> dict[str, object]:
    reader = _reader(stream, ("address", value_col))
    out: dict[str, object] = {}
    for row in reader:
        line = reader.line_num
        addr = normalize_address(row["address"] or "", line)
        value = parse_value((row[value_col] or "").strip(), line)
        if addr in out and out[addr] != value:
            raise LabelConflictError(addr, line)
        out[addr] = value
    return out


def _parse_label(raw: str, line: int) -> int:
    if raw not in ("0", "1"):
        raise FormatError(f"label must be 0 or 1, got {raw!r}", line)
    return int(raw)


def _parse_kind(raw: str, line: int) -> str:
    kind = raw.lower()
    if kind not in KINDS:
        raise FormatError(f"kind must be one of {KINDS}, got {raw!r}", line)
    return kind


def load_labels(stream: TextIO | Iterable[str]) -> dict[str, int]:
    return _load_map(stream, "label", _parse_label)  # type: ignore[return-value]


def load_kinds(stream: TextIO | Iterable[str]) -> dict[str, str]:
    return _load_map(stream, "kind", _parse_kind)  # type: ignore[return-value]


@dataclass(frozen=True)
class TxGraph:
    """Directed weighted simple graph over addresses.

    ``nodes`` maps address -> kind; ``edges`` maps (from, to) -> summed Wei.
    Treat instances as immutable: derived indices are cached on first use.
    """

    nodes: dict[str, str] = field(default_factory=dict)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def __contains__(self, address: object) -> bool:
        return address in self.nodes

    @cached_property
    def addresses(self) -> list[str]:
        return sorted(self.nodes)

    @cached_property
    def index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.addresses)}

    @cached_property
    def successors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {a: [] for a in self.nodes}
        for (u, v) in sorted(self.edges):
            out[u].append(v)
        return out

    @cached_property
    def predecessors(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {a: [] for a in self.nodes}
        for (u, v) in sorted(self.edges):
            out[v].append(u)
        return out

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Unweighted 0/1 adjacency in ``addresses`` order, A[i, j] = 1 iff i -> j."""
        n = self.n_nodes
        idx = self.index
        if not self.edges:
            return sp.csr_matrix((n, n), dtype=np.float64)
        rows = np.fromiter((idx[u] for u, _ in self.edges), dtype=np.int64, count=len(self.edges))
        cols = np.fromiter((idx[v] for _, v in self.edges), dtype=np.int64, count=len(self.edges))
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a

    def kind(self, address: str) -> str:
        return self.nodes[address]


def build_graph(records: Iterable[TxRecord], kinds: Mapping[str, str] | None = None) -> TxGraph:
    """Collapse records into a simple digraph; addresses without a kind are EOAs."""
    kinds = kinds or {}
    edges: dict[tuple[str, str], int] = {}
    nodes: dict[str, str] = {}
    for rec in records:
        for a in (rec.from_address, rec.to_address):
            if a not in nodes:
                nodes[a] = kinds.get(a, EOA)
        key = (rec.from_address, rec.to_address)
        edges[key] = edges.get(key, 0) + rec.value_wei
    return TxGraph(
        nodes={a: nodes[a] for a in sorted(nodes)},
        edges={k: edges[k] for k in sorted(edges)},
    )


def degree_counts(g: TxGraph) -> tuple[dict[str, int], dict[str, int]]:
    indeg = {a: 0 for a in g.nodes}
    outdeg = {a: 0 for a in g.nodes}
    for (u, v) in g.edges:
        outdeg[u] += 1
        indeg[v] += 1
    return indeg, outdeg


def prune_low_degree(g: TxGraph, min_total_degree: int = 2) -> TxGraph:
    """Peel nodes with in+out degree below the threshold until none remain."""
    indeg, outdeg = degree_counts(g)
    total = {a: indeg[a] + outdeg[a] for a in g.nodes}
    removed: set[str] = set()
    queue = deque(a for a in g.addresses if total[a] < min_total_degree)
    succ, pred = g.successors, g.predecessors
    while queue:
        a = queue.popleft()
        if a in removed:
            continue
        removed.add(a)
        for b in succ[a]:
            if b not in removed:
                total[b] -= 1
                if total[b] < min_total_degree:
                    queue.append(b)
        for b in pred[a]:
            if b not in removed:
                total[b] -= 1
                if total[b] < min_total_degree:
                    queue.append(b)
    return TxGraph(
        nodes={a: k for a, k in g.nodes.items() if a not in removed},
        edges={e: w for e, w in g.edges.items() if e[0] not in removed and e[1] not in removed},
    )


def graph_to_json(g: TxGraph) -> dict:
    return {
        "nodes": [{"address": a, "kind": g.nodes[a]} for a in g.addresses],
        "edges": [{"from": u, "to": v, "weight_wei": str(w)} for (u, v), w in sorted(g.edges.items())],
    }


def graph_from_json(doc: Mapping) -> TxGraph:
    try:
        nodes = {normalize_address(n["address"]): _parse_kind(n["kind"], None) for n in doc["nodes"]}
        edges = {}
        for e in doc["edges"]:
            u, v = normalize_address(e["from"]), normalize_address(e["to"])
            if u not in nodes or v not in nodes:
                raise FormatError(f"edge {u}->{v} references an unknown node")
            w = int(e["weight_wei"])
            if w < 0:
                raise FormatError(f"negative edge weight on {u}->{v}")
            edges[(u, v)] = w
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad graph snapshot: {exc!r}") from None
    return TxGraph(
        nodes={a: nodes[a] for a in sorted(nodes)},
        edges={k: edges[k] for k in sorted(edges)},
    )


def dump_graph(g: TxGraph, fh: TextIO) -> None:
    json.dump(graph_to_json(g), fh, indent=1)
    fh.write("\n")


def load_graph(fh: TextIO) -> TxGraph:
    try:
        doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"graph snapshot is not valid JSON: {exc}") from None
    return graph_from_json(doc)


def write_transactions(records: Iterable[TxRecord], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TX_HEADER)
    for r in records:
        w.writerow((r.from_address, r.to_address, r.value_wei, r.timestamp))
