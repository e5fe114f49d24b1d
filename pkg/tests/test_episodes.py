from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdc.embedding_store import EmbeddingSet
from rdc.episodes import sample_episode
from rdc.errors import InsufficientClasses, InsufficientRowsInClass
from rdc.harness import generate_synthetic


@pytest.fixture(scope="module")
def big():
    return generate_synthetic(25, 40, 4, 1.0, 11)


def test_paper_episode_size(big):
    ep = sample_episode(big, 5, 1, 15, 0)
    assert ep.n == 80
    assert len(ep.rows) == 80


def test_forced_split():
    emb = EmbeddingSet([[1.0], [2.0]], [4, 4], ["a", "b"])
    ep = sample_episode(emb, 1, 1, 1, 123)
    assert sorted([*ep.support_rows, *ep.query_rows]) == [0, 1]
    assert list(ep.support_labels) == [0] and list(ep.query_true_labels) == [0]


def test_same_seed_same_episode(big):
    a = sample_episode(big, 5, 5, 15, 2**63 + 17)
    b = sample_episode(big, 5, 5, 15, 2**63 + 17)
    np.testing.assert_array_equal(a.support_rows, b.support_rows)
    np.testing.assert_array_equal(a.query_rows, b.query_rows)


def test_distinct_seeds_differ(big):
    eps = {tuple(sample_episode(big, 5, 1, 15, s).rows) for s in range(50)}
    assert len(eps) == 50


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 2**64 - 1),
    C=st.integers(1, 6),
    K=st.integers(1, 5),
    Q=st.integers(1, 10),
)
def test_episode_invariants(big, seed, C, K, Q):
    ep = sample_episode(big, C, K, Q, seed)
    assert not set(ep.support_rows) & set(ep.query_rows)
    assert Counter(ep.support_labels.tolist()) == {c: K for c in range(C)}
    assert Counter(ep.query_true_labels.tolist()) == {c: Q for c in range(C)}
    for c in range(C):
        rows = np.concatenate(
            [ep.support_rows[ep.support_labels == c], ep.query_rows[ep.query_true_labels == c]]
        )
        assert len(set(big.labels[rows].tolist())) == 1
    # local ids follow sorted original label order
    originals = [big.labels[ep.support_rows[ep.support_labels == c][0]] for c in range(C)]
    assert originals == sorted(originals)


def test_insufficient_classes():
    emb = EmbeddingSet(np.ones((4, 2)), [0, 0, 1, 1], list("abcd"))
    with pytest.raises(InsufficientClasses):
        sample_episode(emb, 3, 1, 1, 0)


def test_insufficient_rows_reports_class():
    emb = EmbeddingSet(np.ones((5, 2)), [0, 0, 0, 9, 9], list("abcde"))
    with pytest.raises(InsufficientRowsInClass) as err:
        sample_episode(emb, 2, 1, 2, 0)
    assert err.value.label == 9
