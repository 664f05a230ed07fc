"""Pipeline stages. Each stage reads the previous stage's artifacts from the
output directory, writes its own, and drops a ``<stage>.manifest.json``
with content hashes of everything it read and wrote.

    ingest       transactions/kinds csv  -> graph.json (pruned)
    featurize    graph.json              -> features.csv, features.meta.json
    contractize  graph + features + labels -> contracts.json
    resample     contracts.json          -> split.json, resampled.json
    train mlp    resampled.json          -> model_mlp.json
    train gcn    contracts + split       -> model_gcn.json
    evaluate     models + data           -> report.json, metrics.csv
    predict      model + contracts.json  -> predictions.csv
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .balance import LabeledSamples, smote_enn
from .config import PipelineConfig
from .contractize import ContractDataset, build_contract_dataset
from .evaluation import confusion, emit_report, metrics, metrics_csv, stratified_split
from .ingest import (
    CONTRACT,
    FormatError,
    IngestError,
    build_graph,
    graph_to_json,
    iter_transactions,
    load_graph,
    load_kinds,
    load_labels,
    prune_low_degree,
)
from .nn import ModelBundle, VersionMismatchError, gcn_normalize_adjacency, predict
from .topo import (
    FEATURE_ORDER_VERSION,
    FeatureMatrix,
    NormStats,
    assemble_features,
    fit_normalize,
    read_feature_csv,
    write_feature_csv,
)
from .train import train_gcn, train_mlp

log = logging.getLogger(__name__)


class StageInputError(FileNotFoundError):
    """A stage input is missing; run the upstream stage first."""


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def _data_file(path: Path):
    """Open a CSV input; parse errors get the file name prefixed."""
    with open(_need(path), newline="") as fh:
        try:
            yield fh
        except IngestError as exc:
            exc.args = (f"{path}: {exc}",)
            raise


def _need(path: Path) -> Path:
    if not path.exists():
        raise StageInputError(f"missing input {path}")
    return path


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(_need(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


def _manifest(cfg: PipelineConfig, stage: str, inputs: list[Path], outputs: list[Path], extra=None) -> None:
    doc = {
        "stage": stage,
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "feature_order_version": FEATURE_ORDER_VERSION,
        "inputs": {p.name: sha256_file(p) for p in inputs},
        "outputs": {p.name: sha256_file(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    _write_json(Path(cfg.out_dir) / f"{stage}.manifest.json", doc)


def _check_meta(doc: dict, what: str, cfg: PipelineConfig) -> None:
    got = doc.get("feature_order_version")
    if got != FEATURE_ORDER_VERSION:
        raise VersionMismatchError(f"{what} has feature_order_version {got!r}, expected {FEATURE_ORDER_VERSION!r}")
    if doc.get("config_hash") not in (None, cfg.config_hash()):
        log.warning("%s was produced under config %s, current config is %s",
                    what, doc.get("config_hash"), cfg.config_hash())


def out_path(cfg: PipelineConfig, name: str) -> Path:
    return Path(cfg.out_dir) / name


# -- stages ------------------------------------------------------------------

def stage_ingest(cfg: PipelineConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tx_path = _need(cfg.input_path("transactions"))
    inputs = [tx_path]
    kinds = {}
    kinds_path = cfg.input_path("kinds")
    if kinds_path.exists():
        with _data_file(kinds_path) as fh:
            kinds = load_kinds(fh)
        inputs.append(kinds_path)
    elif cfg.kinds:
        _need(kinds_path)
    with _data_file(tx_path) as fh:
        raw = build_graph(iter_transactions(fh), kinds)
    g = prune_low_degree(raw, cfg.min_total_degree)
    stats = {"raw_nodes": raw.n_nodes, "raw_edges": raw.n_edges, "nodes": g.n_nodes, "edges": g.n_edges}
    log.info("graph: %d nodes / %d edges, pruned to %d / %d", *stats.values())
    doc = graph_to_json(g)
    doc["meta"] = {**stats, "min_total_degree": cfg.min_total_degree, "config_hash": cfg.config_hash(),
                   "feature_order_version": FEATURE_ORDER_VERSION}
    gpath = out / "graph.json"
    _write_json(gpath, doc)
    _manifest(cfg, "ingest", inputs, [gpath], {"counts": stats})
    return stats


def stage_featurize(cfg: PipelineConfig) -> FeatureMatrix:
    gpath = _need(out_path(cfg, "graph.json"))
    with open(gpath) as fh:
        g = load_graph(fh)
    raw = assemble_features(g, cfg.pagerank_damping, cfg.link_tol, cfg.link_max_iter)
    m = fit_normalize(raw)
    fpath, mpath = out_path(cfg, "features.csv"), out_path(cfg, "features.meta.json")
    with open(fpath, "w", newline="") as fh:
        write_feature_csv(m, fh)
    _write_json(mpath, {
        "feature_order_version": m.feature_order_version,
        "norm_stats": m.norm_stats.to_json(),
        "normalized": True,
        "config_hash": cfg.config_hash(),
        "link_analysis": m.meta,
    })
    _manifest(cfg, "featurize", [gpath], [fpath, mpath])
    return m


def _load_features(cfg: PipelineConfig) -> FeatureMatrix:
    meta = _read_json(out_path(cfg, "features.meta.json"))
    _check_meta(meta, "features.meta.json", cfg)
    with open(_need(out_path(cfg, "features.csv")), newline="") as fh:
        addrs, values = read_feature_csv(fh)
    return FeatureMatrix(addrs, values, NormStats.from_json(meta["norm_stats"]), meta["feature_order_version"])


def stage_contractize(cfg: PipelineConfig) -> ContractDataset:
    gpath = _need(out_path(cfg, "graph.json"))
    with open(gpath) as fh:
        g = load_graph(fh)
    m = _load_features(cfg)
    if set(m.addresses) != set(g.nodes):
        raise FormatError("features.csv does not cover the nodes of graph.json")
    labels_path = _need(cfg.input_path("labels"))
    with _data_file(labels_path) as fh:
        labels = load_labels(fh)
    stray = [a for a in labels if g.nodes.get(a, CONTRACT) != CONTRACT]
    if stray:
        log.warning("%d labels attached to EOA addresses are ignored (e.g. %s)", len(stray), stray[0])
    ds = build_contract_dataset(g, m, labels)
    doc = ds.to_json()
    doc["config_hash"] = cfg.config_hash()
    cpath = out_path(cfg, "contracts.json")
    _write_json(cpath, doc)
    n_pos = sum(1 for y in ds.labels if y == 1)
    n_lab = sum(1 for y in ds.labels if y is not None)
    _manifest(cfg, "contractize",
              [gpath, out_path(cfg, "features.csv"), out_path(cfg, "features.meta.json"), labels_path], [cpath],
              {"counts": {"contracts": len(ds), "labeled": n_lab, "positive": n_pos, "contract_edges": len(ds.edges)}})
    return ds


def _load_contracts(cfg: PipelineConfig) -> ContractDataset:
    doc = _read_json(out_path(cfg, "contracts.json"))
    _check_meta(doc, "contracts.json", cfg)
    return ContractDataset.from_json(doc)


def stage_resample(cfg: PipelineConfig) -> dict:
    ds = _load_contracts(cfg)
    seeds = cfg.stage_seeds()
    labeled = ds.labeled_indices
    y = ds.label_array(labeled)
    tr_pos, te_pos = stratified_split(y, cfg.test_fraction, seeds["split"])
    train_idx, test_idx = labeled[tr_pos], labeled[te_pos]
    split_doc = {"train": train_idx.tolist(), "test": test_idx.tolist(), "seed": seeds["split"],
                 "test_fraction": cfg.test_fraction, "config_hash": cfg.config_hash(),
                 "feature_order_version": ds.feature_order_version}

    def samples(idx):
        return LabeledSamples(ds.features[idx], ds.label_array(idx), source=idx)

    if cfg.resample_scope == "train-only":
        train, report = smote_enn(samples(train_idx), cfg.smote_k, cfg.enn_k, cfg.target_ratio, seeds["smote"])
        test = samples(test_idx)
    else:
        full, report = smote_enn(samples(labeled), cfg.smote_k, cfg.enn_k, cfg.target_ratio, seeds["smote"])
        rtr, rte = stratified_split(full.labels, cfg.test_fraction, seeds["split"])
        train, test = full.subset(rtr), full.subset(rte)

    rows_src = [None if v < 0 else int(v) for v in np.concatenate([train.source, test.source])]
    feats = np.vstack([train.features, test.features])
    doc = {
        "contracts": [None if s is None else ds.contracts[s] for s in rows_src],
        "source_index": rows_src,
        "features": [[float(x) for x in r] for r in feats],
        "labels": [int(v) for v in np.concatenate([train.labels, test.labels])],
        "provenance": list(train.provenance) + list(test.provenance),
        "partition": ["train"] * len(train) + ["test"] * len(test),
        "edges": [],
        "feature_order_version": ds.feature_order_version,
        "resample_scope": cfg.resample_scope,
        "class_counts": {k: {str(c): n for c, n in v.items()} for k, v in report.items()},
        "config_hash": cfg.config_hash(),
    }
    spath, rpath = out_path(cfg, "split.json"), out_path(cfg, "resampled.json")
    _write_json(spath, split_doc)
    _write_json(rpath, doc)
    _manifest(cfg, "resample", [out_path(cfg, "contracts.json")], [spath, rpath],
              {"class_counts": doc["class_counts"]})
    return doc


def _load_resampled(cfg: PipelineConfig) -> tuple[LabeledSamples, LabeledSamples, dict]:
    doc = _read_json(out_path(cfg, "resampled.json"))
    _check_meta(doc, "resampled.json", cfg)
    part = np.array(doc["partition"])
    x = np.array(doc["features"], dtype=np.float64).reshape(len(part), -1)
    y = np.array(doc["labels"], dtype=np.int64)
    prov = doc["provenance"]
    src = np.array([-1 if v is None else v for v in doc["source_index"]], dtype=np.int64)

    def pick(name):
        idx = np.flatnonzero(part == name)
        return LabeledSamples(x[idx], y[idx], [prov[i] for i in idx], src[idx])

    return pick("train"), pick("test"), doc


def _load_split(cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    doc = _read_json(out_path(cfg, "split.json"))
    _check_meta(doc, "split.json", cfg)
    return np.array(doc["train"], dtype=np.int64), np.array(doc["test"], dtype=np.int64)


def _norm_stats(cfg: PipelineConfig) -> NormStats:
    meta = _read_json(out_path(cfg, "features.meta.json"))
    return NormStats.from_json(meta["norm_stats"])


def stage_train(cfg: PipelineConfig, kind: str) -> ModelBundle:
    seeds = cfg.stage_seeds()
    ns = _norm_stats(cfg)
    if kind == "mlp":
        train, test, _ = _load_resampled(cfg)
        tcfg = dataclasses.replace(cfg.mlp, seed=seeds["mlp"])
        bundle = train_mlp(train, tcfg, test, ns, FEATURE_ORDER_VERSION, cfg.threshold)
        inputs = [out_path(cfg, "resampled.json")]
    elif kind == "gcn":
        ds = _load_contracts(cfg)
        train_idx, test_idx = _load_split(cfg)
        tcfg = dataclasses.replace(cfg.gcn, seed=seeds["gcn"])
        bundle = train_gcn(ds, train_idx, tcfg, test_idx, cfg.gcn_batch_size, cfg.gcn_minority_fraction,
                           cfg.gcn_radius, cfg.gcn_batches_per_epoch, ns, cfg.threshold)
        inputs = [out_path(cfg, "contracts.json"), out_path(cfg, "split.json")]
    else:
        raise ValueError(f"unknown model kind {kind!r}; expected mlp or gcn")
    doc = bundle.to_json()
    doc["config_hash"] = cfg.config_hash()
    mpath = out_path(cfg, f"model_{kind}.json")
    _write_json(mpath, doc)
    _manifest(cfg, f"train_{kind}", inputs + [out_path(cfg, "features.meta.json")], [mpath])
    return bundle


def load_bundle(path: Path) -> ModelBundle:
    return ModelBundle.from_json(_read_json(path))


def _evaluate_bundle(cfg: PipelineConfig, bundle: ModelBundle) -> dict:
    if bundle.kind == "mlp":
        _, test, rdoc = _load_resampled(cfg)
        probs = predict(bundle, test.features, rdoc["feature_order_version"])
        y = test.labels
        extra = {"resample": {"scope": rdoc["resample_scope"], "class_counts": rdoc["class_counts"]}}
    else:
        ds = _load_contracts(cfg)
        _, test_idx = _load_split(cfg)
        adj = gcn_normalize_adjacency(ds.adjacency(), len(ds))
        probs = predict(bundle, ds.features, ds.feature_order_version, adj)[test_idx]
        y = ds.label_array(test_idx)
        extra = {}
    cm = confusion(probs, y, cfg.threshold)
    return {"bundle": bundle, "confusion": cm, "metrics": metrics(cm), "n_test": int(len(y)), **extra}


def stage_evaluate(cfg: PipelineConfig, kinds=("mlp", "gcn")) -> str:
    results, inputs = [], []
    for kind in kinds:
        mpath = out_path(cfg, f"model_{kind}.json")
        if not mpath.exists():
            continue
        inputs.append(mpath)
        results.append(_evaluate_bundle(cfg, load_bundle(mpath)))
    if not results:
        raise StageInputError(f"no trained model found in {cfg.out_dir}; run `train` first")
    text = emit_report(results, cfg.hyperparameters(), cfg.stage_seeds())
    rpath, cpath = out_path(cfg, "report.json"), out_path(cfg, "metrics.csv")
    rpath.write_text(text)
    cpath.write_text(metrics_csv(text))
    _manifest(cfg, "evaluate", inputs, [rpath, cpath])
    return text


def stage_predict(cfg: PipelineConfig, model_path: Path, output: Path | None = None) -> Path:
    bundle = load_bundle(_need(model_path))
    ds = _load_contracts(cfg)
    adj = gcn_normalize_adjacency(ds.adjacency(), len(ds)) if bundle.kind == "gcn" else None
    probs = predict(bundle, ds.features, ds.feature_order_version, adj)
    output = output or out_path(cfg, f"predictions_{bundle.kind}.csv")
    with open(output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("address", "probability", "predicted_scam"))
        for a, p in zip(ds.contracts, probs):
            w.writerow((a, repr(float(p)), int(p >= cfg.threshold)))
    _manifest(cfg, f"predict_{bundle.kind}", [model_path, out_path(cfg, "contracts.json")], [output])
    return output


def run_pipeline(cfg: PipelineConfig) -> str:
    stage_ingest(cfg)
    stage_featurize(cfg)
    stage_contractize(cfg)
    stage_resample(cfg)
    stage_train(cfg, "mlp")
    stage_train(cfg, "gcn")
    return stage_evaluate(cfg)
