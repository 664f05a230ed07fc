import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_ball, brute_enn_drop, on_knn_segment
from scamgraph.balance import (
    ORIGINAL,
    SYNTHETIC,
    LabeledSamples,
    ResampleError,
    balanced_batch_sampler,
    ego_subgraph,
    enn,
    enn_mask,
    knn_indices,
    smote,
    smote_enn,
)
from scamgraph.contractize import ContractDataset


def blobs(seed, n_maj, n_min, sep=3.0, dim=13):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(0, 1, (n_maj, dim)), rng.normal(sep, 1, (n_min, dim))])
    y = np.r_[np.zeros(n_maj, int), np.ones(n_min, int)]
    return LabeledSamples(x, y)


def contract_ds(edges, n, labels=None):
    labels = labels if labels is not None else [i % 2 for i in range(n)]
    return ContractDataset([f"c{i:03d}" for i in range(n)], np.zeros((n, 13)), labels,
                           {(min(a, b), max(a, b)): 1 for a, b in edges})


def test_smote_two_point_minority():
    s = LabeledSamples(np.array([[0, 0], [1, 1], [5, 0], [5, 1], [6, 0], [6, 1]], float), [1, 1, 0, 0, 0, 0])
    out = smote(s, k=1, rng_seed=3)
    new = out.features[6:]
    assert len(new) == 2
    np.testing.assert_allclose(new[:, 0], new[:, 1])
    assert ((new >= 0) & (new <= 1)).all()
    assert out.provenance[6:] == [SYNTHETIC, SYNTHETIC]
    assert (out.labels[6:] == 1).all()


def test_smote_count_formula():
    s = blobs(0, 3398, 11)
    out = smote(s, k=5, target_ratio=1.0, rng_seed=0)
    assert len(out) - len(s) == 3387
    for ratio in (0.3, 0.5, 0.77):
        extra = len(smote(s, 5, ratio, 0)) - len(s)
        assert extra == max(0, math.ceil(ratio * 3398 - 11))


def test_smote_deterministic_and_noop():
    s = blobs(1, 60, 6)
    a, b = smote(s, rng_seed=9), smote(s, rng_seed=9)
    assert a.features.tobytes() == b.features.tobytes()
    bal = blobs(2, 10, 10)
    assert len(smote(bal)) == len(bal)
    with pytest.raises(ResampleError):
        smote(blobs(3, 10, 1))


@given(st.integers(0, 2**32), st.integers(2, 12), st.integers(13, 40), st.integers(1, 7))
@settings(max_examples=40, deadline=None)
def test_smote_rows_on_neighbor_segments(seed, n_min, n_maj, k):
    s = blobs(seed, n_maj, n_min, sep=1.0, dim=3)
    out = smote(s, k=k, rng_seed=seed)
    np.testing.assert_array_equal(out.features[: len(s)], s.features)
    xm = s.features[s.labels == 1]
    kk = min(k, n_min - 1)
    for p in out.features[len(s):]:
        assert on_knn_segment(p, xm, kk)
    assert set(out.labels[len(s):]) <= {1}


def test_knn_tie_break_lower_index():
    x = np.array([[0.0], [1.0], [-1.0], [2.0]])
    assert knn_indices(x, 2)[0].tolist() == [1, 2]


@given(st.integers(0, 2**32), st.integers(5, 50), st.sampled_from([1, 3, 5]), st.booleans())
@settings(max_examples=60, deadline=None)
def test_enn_matches_brute_oracle(seed, n, k, grid):
    rng = np.random.default_rng(seed)
    # integer grids make distance ties common, exercising the tie rule
    x = rng.integers(0, 4, (n, 2)).astype(float) if grid else rng.normal(size=(n, 3))
    y = rng.integers(0, 2, n)
    if k >= n:
        return
    got = set(np.flatnonzero(enn_mask(x, y, k)).tolist())
    assert got == brute_enn_drop(x, y, k)


def test_enn_examples():
    x = np.array([[0.0], [0.1], [0.2], [0.3], [10.0], [10.1], [10.2]])
    y = np.array([1, 1, 1, 0, 0, 0, 0])
    assert enn_mask(x, y, 3).tolist() == [False, False, False, True, False, False, False]
    sep = blobs(4, 20, 20, sep=50)
    assert len(enn(sep)) == len(sep)
    with pytest.raises(ResampleError):
        enn(LabeledSamples(np.zeros((3, 2)), [0, 1, 0]), k=3)


def test_enn_removes_from_both_classes():
    s = blobs(5, 200, 200, sep=1.0)
    drop = enn_mask(s.features, s.labels, 3)
    assert drop[s.labels == 0].any() and drop[s.labels == 1].any()


def test_smote_enn_fixed_point_and_report():
    s = blobs(6, 30, 30, sep=40)
    out, rep = smote_enn(s)
    assert out.features.tobytes() == s.features.tobytes()
    assert rep["before"] == rep["after_smote"] == rep["after_enn"] == {0: 30, 1: 30}


def test_smote_enn_pinned_counts():
    # reference run pinned after the SMOTE and ENN pieces passed their oracles
    out, rep = smote_enn(blobs(2024, 400, 9, sep=0.5), rng_seed=7)
    assert rep["after_smote"] == {0: 400, 1: 400}
    assert rep["after_enn"] == {0: 369, 1: 400}
    assert len(out) <= 800
    assert all(p == ORIGINAL for p, src in zip(out.provenance, out.source) if src >= 0)


def test_ego_examples():
    ds = contract_ds([(0, 1), (1, 2)], 4)
    e = ego_subgraph(ds, 1, radius=1)
    assert e.node_indices.tolist() == [1, 0, 2]
    assert e.edges == [(0, 1), (1, 2)]
    iso = ego_subgraph(ds, 3, radius=2)
    assert iso.node_indices.tolist() == [3] and iso.adjacency.nnz == 0


@given(st.integers(0, 2**32), st.integers(1, 30), st.floats(0.0, 0.3), st.integers(0, 3))
@settings(max_examples=60, deadline=None)
def test_ego_matches_brute_bfs(seed, n, p, radius):
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    ds = contract_ds(edges, n)
    nbr = {i: set() for i in range(n)}
    for i, j in edges:
        nbr[i].add(j)
        nbr[j].add(i)
    c = int(rng.integers(0, n))
    e = ego_subgraph(ds, c, radius)
    members = set(e.node_indices.tolist())
    assert e.node_indices[0] == c
    assert members == brute_ball(nbr, c, radius)
    induced = sorted((i, j) for i, j in edges if i in members and j in members)
    assert e.edges == induced


def test_sampler_ceiling_rule_and_share():
    labels = [1 if i < 5 else 0 for i in range(40)]
    ds = contract_ds([(i, i + 1) for i in range(39)], 40, labels)
    for batch in balanced_batch_sampler(ds, 8, 0.5, 1, rng_seed=1, n_batches=5):
        assert sum(b.center_label == 1 for b in batch) == 4
    for batch in balanced_batch_sampler(ds, 7, 0.5, 1, rng_seed=1, n_batches=3):
        assert sum(b.center_label == 1 for b in batch) == 4
    for batch in balanced_batch_sampler(ds, 6, 1.0, 1, rng_seed=1, n_batches=3):
        assert all(b.center_label == 1 for b in batch)
    # uneven batch so the ceiling does not pin the share exactly
    centers = [b.center_label for batch in balanced_batch_sampler(ds, 10, 0.5, 0, 2, n_batches=1000) for b in batch]
    assert abs(np.mean(centers) - 0.5) < 0.02
    a = [[b.center for b in bt] for bt in balanced_batch_sampler(ds, 8, 0.5, 1, 3, n_batches=4)]
    b = [[b.center for b in bt] for bt in balanced_batch_sampler(ds, 8, 0.5, 1, 3, n_batches=4)]
    assert a == b


def test_sampler_needs_both_classes():
    ds = contract_ds([], 4, [0, 0, 0, None])
    with pytest.raises(ResampleError):
        next(balanced_batch_sampler(ds, 4))
