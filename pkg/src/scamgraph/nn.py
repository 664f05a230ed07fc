"""Numpy MLP / GCN with analytic gradients, BCE-with-logits loss and Adam.

Layers are stored as a list of ``(W, b)`` pairs with ``W`` shaped
(fan_in, fan_out); rows of ``X`` are samples. A GCN layer is the MLP layer
with the normalized adjacency applied after the weight product, so both
architectures share one forward/backward routine.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .topo import N_FEATURES, NormStats

Layers = list[tuple[np.ndarray, np.ndarray]]


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    """Non-finite loss or gradient during training."""

    def __init__(self, message: str, epoch: int | None = None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class VersionMismatchError(ValueError):
    pass


@dataclass
class TrainConfig:
    hidden_dim: int = 32
    n_layers: int = 2
    dropout: float = 0.2
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    epochs: int = 5000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 50

    @classmethod
    def mlp(cls, **kw) -> "TrainConfig":
        return cls(**{"hidden_dim": 32, "n_layers": 2, "epochs": 5000, **kw})

    @classmethod
    def gcn(cls, **kw) -> "TrainConfig":
        return cls(**{"hidden_dim": 64, "n_layers": 6, "epochs": 500, **kw})

    def layer_sizes(self, n_in: int = N_FEATURES) -> list[int]:
        return [n_in] + [self.hidden_dim] * (self.n_layers - 1) + [1]


def init_layers(sizes: Sequence[int], rng: np.random.Generator) -> Layers:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((w, b))
    return layers


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dropout_masks(rng: np.random.Generator, layers: Layers, n_rows: int, p: float) -> list[np.ndarray] | None:
    """Inverted-dropout masks for every hidden layer (kept units scaled by 1/(1-p))."""
    if p <= 0:
        return None
    keep = 1.0 - p
    return [(rng.random((n_rows, w.shape[1])) < keep) / keep for w, _ in layers[:-1]]


def _check_input(layers: Layers, x: np.ndarray, adj) -> None:
    if x.ndim != 2 or x.shape[1] != layers[0][0].shape[0]:
        raise ShapeError(f"expected input with {layers[0][0].shape[0]} columns, got shape {x.shape}")
    if adj is not None and adj.shape != (x.shape[0], x.shape[0]):
        raise ShapeError(f"adjacency shape {adj.shape} does not match {x.shape[0]} nodes")


def _forward(layers: Layers, x: np.ndarray, adj=None, masks=None):
    _check_input(layers, x, adj)
    hs, zs = [x], []
    h = x
    last = len(layers) - 1
    for l, (w, b) in enumerate(layers):
        u = h @ w
        if adj is not None:
            u = adj @ u
        z = u + b
        zs.append(z)
        if l < last:
            h = relu(z)
            if masks is not None:
                h = h * masks[l]
            hs.append(h)
    return zs[-1][:, 0], (hs, zs)


def mlp_forward(layers: Layers, x: np.ndarray, masks=None) -> np.ndarray:
    """Logits W2 . relu(W1 x + b1) + b2 (generalized to any depth); shape (N,)."""
    return _forward(layers, np.asarray(x, dtype=np.float64), None, masks)[0]


def gcn_forward(layers: Layers, adj, x: np.ndarray, masks=None) -> np.ndarray:
    """Logits of relu(A H W + b) layers with a linear last layer; shape (N,)."""
    return _forward(layers, np.asarray(x, dtype=np.float64), adj, masks)[0]


def gcn_normalize_adjacency(edges, n: int) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 with A the binarized undirected edge set.

    ``edges`` is either an iterable of index pairs / a dict keyed by index
    pairs, or an already-built (n x n) sparse adjacency.
    """
    if sp.issparse(edges):
        a = sp.csr_matrix(edges, dtype=np.float64)
    else:
        pairs = np.array(list(edges), dtype=np.int64).reshape(-1, 2)
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    a = (a + a.T) > 0
    a = a.astype(np.float64).tolil()
    a.setdiag(1.0)
    a = sp.csr_matrix(a)
    d = np.asarray(a.sum(axis=1)).ravel()
    dinv = sp.diags(1.0 / np.sqrt(d))
    out = sp.csr_matrix(dinv @ a @ dinv)
    out.sort_indices()
    return out


def bce_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean of softplus(z) - y*z, evaluated as max(z,0) - y*z + log1p(exp(-|z|))."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if z.size == 0:
        raise ValueError("bce_loss of an empty batch")
    if z.shape != y.shape:
        raise ShapeError(f"logits {z.shape} vs labels {y.shape}")
    return float(np.mean(np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))))


def l2_penalty(layers: Layers, weight_decay: float) -> float:
    return 0.5 * weight_decay * sum(float((w * w).sum() + (b * b).sum()) for w, b in layers)


def objective(layers: Layers, x, y, adj=None, masks=None, weight_decay: float = 0.0, target=None) -> float:
    z, _ = _forward(layers, np.asarray(x, dtype=np.float64), adj, masks)
    if target is not None:
        z = z[target]
    return bce_loss(z, y) + l2_penalty(layers, weight_decay)


def backward(layers: Layers, x, y, adj=None, masks=None, weight_decay: float = 0.0,
             target=None) -> tuple[float, Layers]:
    """Loss and exact gradients of BCE (+ 0.5*wd*||theta||^2) w.r.t. every (W, b).

    ``target`` selects the rows whose logits enter the loss (GCN batch
    centers); ``None`` uses every row. ReLU'(0) is taken as 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    z, (hs, zs) = _forward(layers, x, adj, masks)
    rows = np.arange(len(z)) if target is None else np.asarray(target)
    if len(rows) != len(y):
        raise ShapeError(f"{len(rows)} scored rows vs {len(y)} labels")
    zt = z[rows]
    loss = bce_loss(zt, y) + l2_penalty(layers, weight_decay)

    dz = np.zeros((len(z), 1))
    np.add.at(dz[:, 0], rows, (sigmoid(zt) - y) / len(y))
    adj_t = None if adj is None else adj.T
    grads: Layers = [None] * len(layers)  # type: ignore[list-item]
    for l in range(len(layers) - 1, -1, -1):
        w, b = layers[l]
        du = dz if adj_t is None else adj_t @ dz
        gw = hs[l].T @ du + weight_decay * w
        gb = dz.sum(axis=0) + weight_decay * b
        grads[l] = (gw, gb)
        if l == 0:
            break
        dh = du @ w.T
        if masks is not None:
            dh = dh * masks[l - 1]
        dz = dh * (zs[l - 1] > 0)
    return loss, grads


@dataclass
class AdamState:
    step: int = 0
    m: Layers = field(default_factory=list)
    v: Layers = field(default_factory=list)


def adam_step(layers: Layers, grads: Layers, state: AdamState, cfg: TrainConfig) -> tuple[Layers, AdamState]:
    """One Adam update with bias correction and coupled L2 (g += wd * theta)."""
    for gw, gb in grads:
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            bad = sum(int((~np.isfinite(g)).sum()) for pair in grads for g in pair)
            raise NumericError(f"{bad} non-finite gradient entries at step {state.step + 1}")
    if not state.m:
        state.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
        state.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    new_layers, new_m, new_v = [], [], []
    for (p_pair, g_pair, m_pair, v_pair) in zip(layers, grads, state.m, state.v):
        out_p, out_m, out_v = [], [], []
        for p, g, m, v in zip(p_pair, g_pair, m_pair, v_pair):
            g = g + cfg.weight_decay * p
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
            p = p - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
            out_p.append(p)
            out_m.append(m)
            out_v.append(v)
        new_layers.append(tuple(out_p))
        new_m.append(tuple(out_m))
        new_v.append(tuple(out_v))
    state.m, state.v = new_m, new_v
    return new_layers, state


# -- bundles -----------------------------------------------------------------

@dataclass
class ModelBundle:
    kind: str  # "mlp" | "gcn"
    layers: Layers
    config: TrainConfig
    feature_order_version: str
    norm_stats: NormStats | None = None
    history: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        params = []
        for l, (w, b) in enumerate(self.layers):
            params.append({"name": f"W{l}", "shape": list(w.shape), "data": [float(x) for x in w.ravel()]})
            params.append({"name": f"b{l}", "shape": list(b.shape), "data": [float(x) for x in b.ravel()]})
        return {
            "kind": self.kind,
            "feature_order_version": self.feature_order_version,
            "weight_layout": "W[fan_in][fan_out], row-major; logits = H @ W + b",
            "config": asdict(self.config),
            "norm_stats": None if self.norm_stats is None else self.norm_stats.to_json(),
            "params": params,
            "history": self.history,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelBundle":
        arrays = {p["name"]: np.array(p["data"], dtype=np.float64).reshape(p["shape"]) for p in doc["params"]}
        n = len(doc["params"]) // 2
        layers = [(arrays[f"W{l}"], arrays[f"b{l}"]) for l in range(n)]
        ns = doc.get("norm_stats")
        return cls(
            kind=doc["kind"],
            layers=layers,
            config=TrainConfig(**doc["config"]),
            feature_order_version=doc["feature_order_version"],
            norm_stats=None if ns is None else NormStats.from_json(ns),
            history=doc.get("history", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def predict(bundle: ModelBundle, features: np.ndarray, feature_order_version: str,
            adjacency=None) -> np.ndarray:
    """Scam probabilities. GCN bundles need the normalized contract adjacency."""
    if feature_order_version != bundle.feature_order_version:
        raise VersionMismatchError(
            f"features are {feature_order_version!r}, model expects {bundle.feature_order_version!r}")
    x = np.asarray(features, dtype=np.float64)
    if bundle.kind == "mlp":
        z = mlp_forward(bundle.layers, x)
    elif bundle.kind == "gcn":
        if adjacency is None:
            raise ValueError("GCN prediction needs the normalized contract adjacency")
        z = gcn_forward(bundle.layers, adjacency, x)
    else:
        raise ValueError(f"unknown model kind {bundle.kind!r}")
    return sigmoid(z)
