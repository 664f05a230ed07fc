"""Train/test split, confusion-matrix metrics, first-layer weight
contributions and the JSON report."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import ModelBundle
from .topo import FEATURE_NAMES

REPORT_SCHEMA_VERSION = "report-v1"
MODEL_ORDER = {"mlp": 0, "gcn": 1}


class SplitError(ValueError):
    pass


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def stratified_split(labels: Sequence[int], test_fraction: float = 0.2,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Positions of train and test rows; each class contributes
    round(count * test_fraction) test rows, at least one."""
    if not 0 < test_fraction < 1:
        raise SplitError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise SplitError(f"class {c} has {len(idx)} sample(s); need at least 2 to split")
        n_test = min(len(idx) - 1, max(1, _half_up(len(idx) * test_fraction)))
        idx = rng.permutation(idx)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(probs, labels, threshold: float = 0.5) -> ConfusionMatrix:
    p = np.asarray(probs, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.int64).ravel()
    if p.size == 0:
        raise ValueError("confusion of an empty prediction set")
    if p.shape != y.shape:
        raise ValueError(f"{p.size} predictions vs {y.size} labels")
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    pred = p >= threshold
    pos = y == 1
    return ConfusionMatrix(
        tp=int((pred & pos).sum()),
        fp=int((pred & ~pos).sum()),
        fn=int((~pred & pos).sum()),
        tn=int((~pred & ~pos).sum()),
    )


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def metrics(cm: ConfusionMatrix) -> dict[str, float]:
    """Accuracy, precision, recall, F1; zero denominators give 0."""
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    return {
        "accuracy": _ratio(cm.tp + cm.tn, cm.total),
        "precision": precision,
        "recall": recall,
        "f1": f1_from(precision, recall),
    }


def f1_from(precision: float, recall: float) -> float:
    return _ratio(2 * precision * recall, precision + recall)


def f1_score(probs, labels, threshold: float = 0.5) -> float:
    return metrics(confusion(probs, labels, threshold))["f1"]


def weight_contributions(bundle: ModelBundle) -> dict[str, float]:
    """Column-wise L1 mass of the first weight layer, one entry per input feature."""
    if bundle.kind != "mlp":
        raise TypeError(f"weight contributions are defined for MLP bundles, not {bundle.kind!r}")
    w1 = bundle.layers[0][0]  # (fan_in, hidden)
    contrib = np.abs(w1).sum(axis=1)
    return {name: float(c) for name, c in zip(FEATURE_NAMES, contrib)}


def emit_report(results: Sequence[dict], config: dict | None = None, seeds: dict | None = None) -> str:
    """Render the evaluation report as deterministic JSON text.

    Each result needs ``bundle`` (ModelBundle), ``metrics`` and ``confusion``;
    optional extras (``n_test``, ``resample``) are echoed.
    """
    if not results:
        raise ValueError("report needs at least one evaluated model")
    models = []
    for r in sorted(results, key=lambda r: MODEL_ORDER.get(r["bundle"].kind, 99)):
        b: ModelBundle = r["bundle"]
        entry = {
            "model": b.kind,
            "metrics": {k: float(r["metrics"][k]) for k in ("accuracy", "precision", "recall", "f1")},
            "confusion": dict(r["confusion"].__dict__) if isinstance(r["confusion"], ConfusionMatrix) else r["confusion"],
            "history": b.history,
            "train_config": b.config.__dict__,
        }
        if b.kind == "mlp":
            entry["weight_contributions"] = weight_contributions(b)
            entry["weight_contribution_rule"] = "sum over hidden units of |W1[feature, hidden]|"
        for k in ("n_test", "resample"):
            if k in r:
                entry[k] = r[k]
        models.append(entry)
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "models": models,
        "config": config or {},
        "seeds": seeds or {},
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def metrics_csv(report_text: str) -> str:
    doc = json.loads(report_text)
    lines = ["model,accuracy,precision,recall,f1"]
    for m in doc["models"]:
        v = m["metrics"]
        lines.append(f"{m['model']},{v['accuracy']!r},{v['precision']!r},{v['recall']!r},{v['f1']!r}")
    return "\n".join(lines) + "\n"
