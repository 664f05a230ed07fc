"""Full-batch MLP training and ego-batch GCN training."""
from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp

from .balance import EgoBatch, LabeledSamples, balanced_batch_sampler
from .contractize import ContractDataset
from .evaluation import f1_score
from .nn import (
    AdamState,
    ModelBundle,
    NumericError,
    TrainConfig,
    adam_step,
    backward,
    dropout_masks,
    gcn_forward,
    gcn_normalize_adjacency,
    init_layers,
    l2_penalty,
    mlp_forward,
    sigmoid,
)
from .topo import FEATURE_ORDER_VERSION, NormStats

log = logging.getLogger(__name__)


def _require_both_classes(y: np.ndarray, what: str) -> None:
    if len(y) == 0:
        raise ValueError(f"{what} is empty")
    if len(np.unique(y)) < 2:
        raise ValueError(f"{what} needs both classes, got only {np.unique(y).tolist()}")


def _empty_history() -> dict:
    return {"epoch": [], "loss": [], "eval_epoch": [], "train_f1": [], "test_f1": []}


def _record_eval(history, epoch, train_f1, test_f1) -> None:
    history["eval_epoch"].append(epoch)
    history["train_f1"].append(train_f1)
    history["test_f1"].append(test_f1)


def train_mlp(samples: LabeledSamples, cfg: TrainConfig, test: LabeledSamples | None = None,
              norm_stats: NormStats | None = None, feature_order_version: str = FEATURE_ORDER_VERSION,
              threshold: float = 0.5) -> ModelBundle:
    """Full-batch Adam on BCE with coupled L2; F1 logged every ``cfg.eval_every`` epochs."""
    _require_both_classes(samples.labels, "training set")
    x, y = samples.features, samples.labels
    rng = np.random.default_rng(cfg.seed)
    layers = init_layers(cfg.layer_sizes(x.shape[1]), rng)
    history = _empty_history()
    state = AdamState()
    for epoch in range(1, cfg.epochs + 1):
        masks = dropout_masks(rng, layers, x.shape[0], cfg.dropout)
        bce, grads = backward(layers, x, y, masks=masks)
        loss = bce + l2_penalty(layers, cfg.weight_decay)
        if not math.isfinite(loss):
            raise NumericError("non-finite training loss", epoch)
        try:
            layers, state = adam_step(layers, grads, state, cfg)
        except NumericError as exc:
            raise NumericError(str(exc), epoch) from None
        history["epoch"].append(epoch)
        history["loss"].append(loss)
        if cfg.eval_every and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            tr = f1_score(sigmoid(mlp_forward(layers, x)), y, threshold)
            te = None if test is None else f1_score(sigmoid(mlp_forward(layers, test.features)), test.labels, threshold)
            _record_eval(history, epoch, tr, te)
    return ModelBundle("mlp", layers, cfg, feature_order_version, norm_stats, history)


def _batch_graph(batch: list[EgoBatch], norm_cache: dict[int, sp.csr_matrix]):
    """Disjoint union of the batch's ego graphs; returns (A_hat, node ids, center rows)."""
    blocks, nodes, centers = [], [], []
    offset = 0
    for ego in batch:
        if ego.center not in norm_cache:
            norm_cache[ego.center] = gcn_normalize_adjacency(ego.adjacency, len(ego.node_indices))
        blocks.append(norm_cache[ego.center])
        nodes.append(ego.node_indices)
        centers.append(offset)
        offset += len(ego.node_indices)
    return _block_diag_csr(blocks), np.concatenate(nodes), np.array(centers, dtype=np.int64)


def _block_diag_csr(blocks: list[sp.csr_matrix]) -> sp.csr_matrix:
    # concatenating CSR arrays is much cheaper than sp.block_diag for many small blocks
    sizes = np.array([b.shape[0] for b in blocks])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    nnz_off = np.concatenate([[0], np.cumsum([b.nnz for b in blocks])])
    indices = np.concatenate([b.indices + o for b, o in zip(blocks, offsets[:-1])])
    data = np.concatenate([b.data for b in blocks])
    indptr = np.concatenate([[0]] + [b.indptr[1:] + o for b, o in zip(blocks, nnz_off[:-1])])
    n = int(offsets[-1])
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def train_gcn(ds: ContractDataset, train_idx: np.ndarray, cfg: TrainConfig, test_idx: np.ndarray | None = None,
              batch_size: int = 8, minority_fraction: float = 0.5, radius: int = 2,
              batches_per_epoch: int = 1, norm_stats: NormStats | None = None,
              threshold: float = 0.5) -> ModelBundle:
    """Train on minority-balanced batches of ego subgraphs, loss on centers only.

    Evaluation runs full-graph inference over the whole contract graph.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    y_train = ds.label_array(train_idx)
    _require_both_classes(y_train, "training set")
    rng = np.random.default_rng(cfg.seed)
    layers = init_layers(cfg.layer_sizes(ds.features.shape[1]), rng)
    sampler = balanced_batch_sampler(ds, batch_size, minority_fraction, radius,
                                     rng_seed=cfg.seed + 1, candidates=train_idx)
    full_adj = gcn_normalize_adjacency(ds.adjacency(), len(ds))
    labels = np.array([-1 if v is None else v for v in ds.labels])
    history = _empty_history()
    state = AdamState()
    norm_cache: dict[int, sp.csr_matrix] = {}
    for epoch in range(1, cfg.epochs + 1):
        epoch_loss = 0.0
        for _ in range(batches_per_epoch):
            batch = next(sampler)
            a_hat, nodes, centers = _batch_graph(batch, norm_cache)
            x = ds.features[nodes]
            y = np.array([e.center_label for e in batch], dtype=np.float64)
            masks = dropout_masks(rng, layers, x.shape[0], cfg.dropout)
            bce, grads = backward(layers, x, y, adj=a_hat, masks=masks, target=centers)
            loss = bce + l2_penalty(layers, cfg.weight_decay)
            if not math.isfinite(loss):
                raise NumericError("non-finite training loss", epoch)
            try:
                layers, state = adam_step(layers, grads, state, cfg)
            except NumericError as exc:
                raise NumericError(str(exc), epoch) from None
            epoch_loss += loss
        history["epoch"].append(epoch)
        history["loss"].append(epoch_loss / batches_per_epoch)
        if cfg.eval_every and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            probs = sigmoid(gcn_forward(layers, full_adj, ds.features))
            tr = f1_score(probs[train_idx], labels[train_idx], threshold)
            te = None
            if test_idx is not None and len(test_idx):
                te = f1_score(probs[test_idx], labels[test_idx], threshold)
            _record_eval(history, epoch, tr, te)
    return ModelBundle("gcn", layers, cfg, ds.feature_order_version, norm_stats, history)
