import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scamgraph.evaluation import (
    ConfusionMatrix,
    SplitError,
    confusion,
    emit_report,
    f1_from,
    metrics,
    metrics_csv,
    stratified_split,
    weight_contributions,
)
from scamgraph.nn import ModelBundle, TrainConfig, init_layers
from scamgraph.topo import FEATURE_NAMES, FEATURE_ORDER_VERSION


def mlp_bundle(seed=0):
    return ModelBundle("mlp", init_layers([13, 32, 1], np.random.default_rng(seed)), TrainConfig.mlp(),
                       FEATURE_ORDER_VERSION, history={"epoch": [1, 2], "loss": [0.7, 0.6]})


def test_split_examples():
    y = [1] * 10 + [0] * 90
    tr, te = stratified_split(y, 0.2, seed=3)
    assert len(te) == 20 and sum(y[i] for i in te) == 2
    tr, te = stratified_split([1] * 5 + [0] * 5, 0.2, 0)
    assert sorted(np.array([1] * 5 + [0] * 5)[te]) == [0, 1]
    a, b = stratified_split(y, 0.2, 9), stratified_split(y, 0.2, 9)
    assert (a[0] == b[0]).all() and (a[1] == b[1]).all()
    with pytest.raises(SplitError):
        stratified_split([1, 0, 0, 0], 0.2)


@given(st.integers(2, 200), st.integers(2, 200), st.floats(0.05, 0.95), st.integers(0, 2**32))
@settings(max_examples=80, deadline=None)
def test_split_disjoint_exhaustive(n_pos, n_neg, frac, seed):
    y = np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)]
    tr, te = stratified_split(y, frac, seed)
    assert set(tr) | set(te) == set(range(len(y)))
    assert not set(tr) & set(te)
    for c, n in ((1, n_pos), (0, n_neg)):
        k = int((y[te] == c).sum())
        assert 1 <= k <= n - 1
        assert k == min(n - 1, max(1, int(np.floor(n * frac + 0.5 + 1e-9))))


def test_metrics_example():
    m = metrics(ConfusionMatrix(tp=2, fp=1, fn=1, tn=6))
    assert m["accuracy"] == pytest.approx(0.8)
    assert m["precision"] == pytest.approx(2 / 3) and m["recall"] == pytest.approx(2 / 3)
    assert m["f1"] == pytest.approx(2 / 3)


def test_f1_from_precision_recall_pairs():
    assert 100 * f1_from(0.913, 0.897) == pytest.approx(90.5, abs=0.05)
    assert 100 * f1_from(0.852, 0.824) == pytest.approx(83.8, abs=0.05)


def test_zero_denominators():
    m = metrics(ConfusionMatrix(0, 0, 3, 5))
    assert m == {"accuracy": 5 / 8, "precision": 0.0, "recall": 0.0, "f1": 0.0}
    with pytest.raises(ValueError):
        confusion([], [])


@given(st.integers(0, 2**32), st.integers(1, 1000), st.floats(0.01, 0.99))
@settings(max_examples=80, deadline=None)
def test_confusion_matches_recount(seed, n, thr):
    rng = np.random.default_rng(seed)
    p, y = rng.random(n), rng.integers(0, 2, n)
    cm = confusion(p, y, thr)
    tp = fp = fn = tn = 0
    for pi, yi in zip(p, y):
        hit = pi >= thr
        tp += hit and yi == 1
        fp += hit and yi == 0
        fn += (not hit) and yi == 1
        tn += (not hit) and yi == 0
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (tp, fp, fn, tn)
    assert cm.total == n
    m = metrics(cm)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    assert m["precision"] == prec and m["recall"] == rec
    if prec + rec > 0:
        assert abs(m["f1"] - 2 * prec * rec / (prec + rec)) < 1e-12


def test_threshold_is_inclusive():
    assert confusion([0.5], [1]).tp == 1


def test_contribution_examples():
    b = mlp_bundle()
    w, bias = b.layers[0]
    b.layers[0] = (np.zeros_like(w), bias)
    assert set(weight_contributions(b).values()) == {0.0}
    one = np.zeros_like(w)
    one[4, 7] = 2.5
    b.layers[0] = (one, bias)
    c = weight_contributions(b)
    assert c[FEATURE_NAMES[4]] == 2.5 and sum(c.values()) == 2.5
    with pytest.raises(TypeError):
        weight_contributions(ModelBundle("gcn", b.layers, TrainConfig.gcn(), FEATURE_ORDER_VERSION))


@given(st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_contribution_sign_invariance_and_permutation(seed):
    rng = np.random.default_rng(seed)
    b = mlp_bundle(seed % 97)
    base = np.array(list(weight_contributions(b).values()))
    w, bias = b.layers[0]
    b.layers[0] = (w * rng.choice([-1.0, 1.0], size=w.shape), bias)
    assert (np.array(list(weight_contributions(b).values())) == base).all()
    perm = rng.permutation(13)
    b.layers[0] = (w[perm], bias)
    np.testing.assert_array_equal(np.array(list(weight_contributions(b).values())), base[perm])


def test_report_ordering_and_determinism():
    mlp, gcn = mlp_bundle(), ModelBundle("gcn", init_layers([13, 4, 1], np.random.default_rng(1)),
                                         TrainConfig.gcn(), FEATURE_ORDER_VERSION)
    cm = ConfusionMatrix(1, 0, 0, 3)
    res = [{"bundle": gcn, "confusion": cm, "metrics": metrics(cm)},
           {"bundle": mlp, "confusion": cm, "metrics": metrics(cm), "n_test": 4}]
    text = emit_report(res, {"seed": 0}, {"split": 0})
    doc = json.loads(text)
    assert [m["model"] for m in doc["models"]] == ["mlp", "gcn"]
    assert set(doc["models"][0]["metrics"]) == {"accuracy", "precision", "recall", "f1"}
    assert "weight_contributions" in doc["models"][0] and "weight_contributions" not in doc["models"][1]
    assert emit_report(res, {"seed": 0}, {"split": 0}) == text
    one = json.loads(emit_report(res[1:]))
    assert len(one["models"]) == 1
    assert metrics_csv(text).splitlines()[0] == "model,accuracy,precision,recall,f1"
    with pytest.raises(ValueError):
        emit_report([])
