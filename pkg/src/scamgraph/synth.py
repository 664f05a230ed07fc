"""Seeded synthetic transaction world with planted scam contracts.

Benign activity: every EOA is funded once by a popular EOA, then sends a
Poisson number of transfers to EOAs or benign contracts picked by a
heavy-tailed popularity law; benign contracts pay out to popular EOAs.

Scam motif: each scam contract is paid by ``scam_fan_in`` fresh EOAs that
each send one small transfer to it plus one transfer to a popular EOA (so
the degree-2 prune keeps them), and the scam forwards funds to at most two
cash-out EOAs.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .ingest import CONTRACT, EOA, TxRecord, write_transactions

T0 = 1577836800  # 2020-01-01T00:00:00Z


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_eoa: int = 2000
    n_contract: int = 300
    n_scam: int = 15
    background_tx_per_eoa: float = 3.0
    scam_fan_in: int = 40
    value_log10_mean: float = 17.0
    value_log10_std: float = 1.0
    eoa_popularity_exponent: float = 1.0
    contract_popularity_exponent: float = 0.5
    seed: int = 0

    def validate(self) -> list[str]:
        errs = []
        for name in ("n_eoa", "n_contract", "n_scam", "scam_fan_in", "seed"):
            if not isinstance(getattr(self, name), int) or isinstance(getattr(self, name), bool):
                errs.append(f"{name} must be an integer")
        if errs:
            return errs
        for name in ("n_eoa", "n_contract", "n_scam", "scam_fan_in"):
            if getattr(self, name) <= 0:
                errs.append(f"{name} must be > 0")
        if self.n_scam >= self.n_contract:
            errs.append("n_scam must be < n_contract")
        if self.n_eoa < 3:
            errs.append("n_eoa must be >= 3")
        if self.background_tx_per_eoa <= 0:
            errs.append("background_tx_per_eoa must be > 0")
        if self.value_log10_std < 0:
            errs.append("value_log10_std must be >= 0")
        return errs


@dataclass
class SynthWorld:
    transactions: list[TxRecord]
    kinds: dict[str, str]
    labels: dict[str, int]


def _addresses(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        a = "0x" + rng.bytes(20).hex()
        if a not in taken:
            taken.add(a)
            out.append(a)
    return out


def _popularity(rng: np.random.Generator, n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    w = rng.permutation(w)
    return w / w.sum()


def generate(cfg: SynthConfig) -> SynthWorld:
    errs = cfg.validate()
    if errs:
        raise SynthConfigError("; ".join(errs))
    rng = np.random.default_rng(cfg.seed)
    taken: set[str] = set()
    eoas = _addresses(rng, cfg.n_eoa, taken)
    contracts = _addresses(rng, cfg.n_contract, taken)
    scam_pos = set(rng.choice(cfg.n_contract, size=cfg.n_scam, replace=False).tolist())
    benign = [c for i, c in enumerate(contracts) if i not in scam_pos]
    scams = [c for i, c in enumerate(contracts) if i in scam_pos]

    eoa_pop = _popularity(rng, cfg.n_eoa, cfg.eoa_popularity_exponent)
    con_pop = _popularity(rng, len(benign), cfg.contract_popularity_exponent)

    def value(shift: float = 0.0) -> int:
        return int(10 ** rng.normal(cfg.value_log10_mean + shift, cfg.value_log10_std))

    def other_eoa(i: int) -> int:
        j = i
        while j == i:
            j = int(rng.choice(cfg.n_eoa, p=eoa_pop))
        return j

    txs: list[tuple[str, str, int]] = []
    for i, e in enumerate(eoas):
        txs.append((eoas[other_eoa(i)], e, value(0.5)))
    for i, e in enumerate(eoas):
        for _ in range(int(rng.poisson(cfg.background_tx_per_eoa))):
            if rng.random() < 0.5:
                txs.append((e, benign[int(rng.choice(len(benign), p=con_pop))], value()))
            else:
                txs.append((e, eoas[other_eoa(i)], value()))
    for c in benign:
        for _ in range(1 + int(rng.poisson(1.0))):
            txs.append((c, eoas[int(rng.choice(cfg.n_eoa, p=eoa_pop))], value()))

    funders_all: list[str] = []
    for s in scams:
        funders = _addresses(rng, cfg.scam_fan_in, taken)
        funders_all.extend(funders)
        raised = 0
        for f in funders:
            v = value(-1.0)
            raised += v
            txs.append((f, s, v))
            txs.append((f, eoas[int(rng.choice(cfg.n_eoa, p=eoa_pop))], value(-1.0)))
        n_out = int(rng.integers(1, 3))
        for j in rng.choice(cfg.n_eoa, size=n_out, replace=False, p=eoa_pop).tolist():
            txs.append((s, eoas[j], raised // n_out))

    order = rng.permutation(len(txs))
    gaps = rng.integers(1, 600, size=len(txs))
    ts = T0 + np.cumsum(gaps)
    records = [TxRecord(txs[k][0], txs[k][1], txs[k][2], int(t)) for k, t in zip(order.tolist(), ts.tolist())]

    kinds = {a: EOA for a in eoas + funders_all}
    kinds.update({c: CONTRACT for c in contracts})
    labels = {c: (1 if i in scam_pos else 0) for i, c in enumerate(contracts)}
    return SynthWorld(records, dict(sorted(kinds.items())), dict(sorted(labels.items())))


def write_world(world: SynthWorld, out_dir: str | Path, cfg: SynthConfig | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "transactions": out / "transactions.csv",
        "kinds": out / "kinds.csv",
        "labels": out / "labels.csv",
    }
    with open(paths["transactions"], "w", newline="") as fh:
        write_transactions(world.transactions, fh)
    with open(paths["kinds"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("address", "kind"))
        w.writerows(world.kinds.items())
    with open(paths["labels"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("address", "label"))
        w.writerows(world.labels.items())
    if cfg is not None:
        paths["config"] = out / "synth_config.json"
        paths["config"].write_text(json.dumps(asdict(cfg), indent=1, sort_keys=True) + "\n")
    return paths
