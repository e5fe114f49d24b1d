import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_episode
from rdc.errors import DimensionMismatch, IndexOutOfRange, MissingRow, NonFiniteValue, ZeroVector
from rdc.metric import (
    DistanceMatrix,
    Prototypes,
    compute_prototypes,
    euclidean_matrix,
    npc_classify,
    npc_classify_from_matrix,
)


def naive_distances(x):
    n = len(x)
    return [[math.sqrt(sum((a - b) ** 2 for a, b in zip(x[i], x[j]))) for j in range(n)] for i in range(n)]


def test_345():
    d = euclidean_matrix([[0.0, 0.0], [3.0, 4.0]], normalize=False)
    assert d.values[0, 1] == 5.0 and d.kind == "euclidean"


def test_identical_rows():
    assert euclidean_matrix([[1.0, 2.0], [1.0, 2.0]], normalize=False).values[0, 1] == 0.0


def test_matches_double_loop():
    x = np.random.default_rng(0).standard_normal((6, 4))
    np.testing.assert_allclose(euclidean_matrix(x, normalize=False).values, naive_distances(x.tolist()), atol=1e-6)


def test_normalize_first():
    x = np.array([[3.0, 4.0], [0.0, 10.0]])
    d = euclidean_matrix(x, normalize=True).values
    assert d[0, 1] == pytest.approx(math.hypot(0.6, 0.2), abs=1e-12)


def test_euclidean_errors():
    with pytest.raises(NonFiniteValue):
        euclidean_matrix([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(ZeroVector):
        euclidean_matrix([[0.0, 0.0], [0.0, 1.0]], normalize=True)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 50), st.integers(1, 32), st.integers(0, 2**32 - 1))
def test_euclidean_oracle_property(n, m, seed):
    x = np.random.default_rng(seed).standard_normal((n, m)) * 3
    d = euclidean_matrix(x, normalize=False).values
    np.testing.assert_allclose(d, naive_distances(x.tolist()), atol=1e-6)
    assert (d == d.T).all() and (np.diag(d) == 0).all()


def test_prototypes():
    ep = make_episode(2, 2, 1)
    feats = np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 5.0], [5.0, 7.0], [9, 9], [9, 9]])
    protos = compute_prototypes(ep, feats)
    np.testing.assert_array_equal(protos.vectors, [[1.0, 1.0], [5.0, 6.0]])


def test_prototype_k1_is_the_support():
    ep = make_episode(3, 1, 1)
    feats = np.random.default_rng(1).standard_normal((6, 4))
    np.testing.assert_array_equal(compute_prototypes(ep, feats).vectors, feats[:3])


def test_prototype_k5_high_precision():
    from fractions import Fraction

    ep = make_episode(2, 5, 1)
    feats = np.random.default_rng(2).standard_normal((12, 3))
    protos = compute_prototypes(ep, feats).vectors
    for c in range(2):
        for j in range(3):
            exact = sum(Fraction(v) for v in feats[5 * c : 5 * c + 5, j]) / 5
            assert abs(protos[c, j] - float(exact)) < 1e-9


def test_prototype_missing_row():
    ep = make_episode(2, 1, 1)
    with pytest.raises(MissingRow):
        compute_prototypes(ep, np.ones((1, 2)))


def test_npc_zero_distance_and_tie():
    protos = Prototypes(np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]]), np.arange(3))
    assert npc_classify([[5.0, 5.0]], protos).tolist() == [2]
    assert npc_classify([[1.0, 0.0]], protos).tolist() == [0]


def test_npc_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        npc_classify([[1.0, 2.0, 3.0]], Prototypes(np.zeros((2, 2)), np.arange(2)))


def test_npc_brute_force():
    rng = np.random.default_rng(4)
    protos = Prototypes(rng.standard_normal((5, 6)), np.arange(5))
    q = rng.standard_normal((75, 6))
    pred = npc_classify(q, protos)
    for j in range(75):
        dists = [math.dist(q[j], p) for p in protos.vectors]
        assert pred[j] == min(range(5), key=lambda c: (dists[c], c))


def test_from_matrix_k1_nearest_support():
    ep = make_episode(5, 1, 1)
    d = np.ones((10, 10))
    d[5, 3] = 0.2
    assert npc_classify_from_matrix(DistanceMatrix(d, "calibrated"), ep)[0] == 3


def test_from_matrix_all_equal():
    ep = make_episode(3, 2, 4)
    pred = npc_classify_from_matrix(DistanceMatrix(np.full((18, 18), 0.7), "jaccard"), ep)
    assert pred.tolist() == [0] * 12


def test_from_matrix_k5_oracle():
    ep = make_episode(4, 5, 3)
    rng = np.random.default_rng(8)
    d = rng.random((32, 32))
    pred = npc_classify_from_matrix(DistanceMatrix(d, "combined"), ep)
    for j in range(12):
        scores = [sum(d[20 + j, 5 * c + s] for s in range(5)) / 5 for c in range(4)]
        assert pred[j] == min(range(4), key=lambda c: (scores[c], c))


def test_from_matrix_too_small():
    with pytest.raises(IndexOutOfRange):
        npc_classify_from_matrix(DistanceMatrix(np.zeros((3, 3)), "jaccard"), make_episode(2, 1, 1))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    ep = make_episode(5, 1, 3)
    d = rng.random((20, 20))
    base = npc_classify_from_matrix(DistanceMatrix(d, "calibrated"), ep)
    warped = npc_classify_from_matrix(DistanceMatrix(np.exp(3 * d) + d**3, "calibrated"), ep)
    np.testing.assert_array_equal(base, warped)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(5)))
def test_class_permutation_equivariance(seed, perm):
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((5, 3))
    q = rng.standard_normal((20, 3))
    perm = np.array(perm)
    pred = npc_classify(q, Prototypes(vecs, np.arange(5)))
    # prototype at new slot s carries the vector of old class perm[s] and the label perm[s]
    permuted = npc_classify(q, Prototypes(vecs[perm], perm))
    np.testing.assert_array_equal(pred, permuted)
