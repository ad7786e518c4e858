import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedskc.data import ClientDataset
from fedskc.knowledge import (SILU_MIN, GlobalSK, LocalSK, build_adjacency, compute_local_sk, discrepancy,
                              merge_global_sk, sk_variance, sk_variances)
from fedskc.model import ModelParams, init_params
from fedskc.rng import stream
from oracles import brute_adjacency, sig


def scalar_sks(values, ids=None):
    ids = ids if ids is not None else range(len(values))
    return [LocalSK(k, np.array([[v]]), np.array([True]), np.array([1])) for k, v in zip(ids, values)]


def random_sks(rng, K, C, p_present=0.7):
    sks = []
    for k in range(K):
        present = rng.random(C) < p_present
        per_class = np.where(present[:, None], rng.normal(size=(C, C)), 0.0)
        sks.append(LocalSK(k, per_class, present, present.astype(np.int64) * 3))
    return sks


def identity_params(c):
    return ModelParams(np.eye(c), np.zeros(c), np.eye(c), np.zeros(c))


def client(x, y, C):
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y)
    return ClientDataset(x, y, C, client_id=0, indices=np.arange(len(y)))


# -- local knowledge ---------------------------------------------------------

def test_local_sk_zero_fixed_point():
    sk = compute_local_sk(identity_params(2), client([[0.0, 0.0]], [1], 2))
    np.testing.assert_array_equal(sk.per_class[1], [0.0, 0.0])
    assert sk.present.tolist() == [False, True]


def test_local_sk_hand_example():
    sk = compute_local_sk(identity_params(2), client([[1.0, 0.0], [3.0, 0.0]], [0, 0], 2))
    assert sk.per_class[0, 0] == pytest.approx(2 * sig(2.0), abs=1e-12)
    assert sk.per_class[0, 0] == pytest.approx(1.761594, abs=5e-7)
    assert sk.per_class[0, 1] == 0.0
    assert not sk.present[1]
    assert sk.counts.tolist() == [2, 0]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_local_sk_respects_silu_floor(seed):
    rng = np.random.default_rng(seed)
    params = init_params(4, 6, 3, rng)
    params = params.with_flat(params.flat() * 5)
    sk = compute_local_sk(params, client(rng.normal(size=(12, 4)) * 3, rng.integers(0, 3, size=12), 3))
    assert sk.per_class.min() >= SILU_MIN - 1e-6


def test_silu_minimum_constant():
    x = np.linspace(-1.4, -1.2, 200001)
    assert (x / (1 + np.exp(-x))).min() == pytest.approx(SILU_MIN, abs=1e-10)


# -- adjacency ---------------------------------------------------------------

def test_adjacency_hand_example():
    adj = build_adjacency(scalar_sks([0.0, 0.1, 1.0]), 0, 1)
    assert adj.matrix.tolist() == [[1, 1, 0], [1, 1, 0], [0, 1, 1]]
    assert adj.matrix.tolist() == brute_adjacency([0.0, 0.1, 1.0], 1)


def test_adjacency_m0_is_identity():
    adj = build_adjacency(scalar_sks([0.3, -2.0, 5.0, 0.3]), 0, 0)
    assert adj.matrix.tolist() == np.eye(4, dtype=int).tolist()


def test_adjacency_tie_goes_to_lower_id():
    adj = build_adjacency(scalar_sks([0.0, 1.0, -1.0]), 0, 1)
    assert adj.matrix[0].tolist() == [1, 1, 0]


def test_adjacency_more_neighbours_than_holders():
    adj = build_adjacency(scalar_sks([0.0, 4.0]), 0, 5)
    assert adj.matrix.tolist() == [[1, 1], [1, 1]]


def test_adjacency_without_holders_is_empty():
    sks = [LocalSK(0, np.zeros((2, 2)), np.array([True, False]), np.array([1, 0]))]
    assert build_adjacency(sks, 1, 1).empty


def test_adjacency_rejects_negative_m():
    with pytest.raises(ValueError):
        build_adjacency(scalar_sks([0.0]), 0, -1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 9), M=st.integers(0, 10))
def test_adjacency_rows_and_diagonal(seed, K, M):
    rng = np.random.default_rng(seed)
    sks = random_sks(rng, K, 4)
    for j in range(4):
        adj = build_adjacency(sks, j, M)
        n = len(adj.clients)
        if n == 0:
            continue
        assert np.all(np.diag(adj.matrix) == 1)
        assert set(np.unique(adj.matrix)) <= {0, 1}
        assert adj.matrix.sum(axis=1).tolist() == [min(M + 1, n)] * n


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.integers(-50, 50), min_size=1, max_size=8), M=st.integers(0, 8))
def test_adjacency_matches_brute_force(values, M):
    # integer-valued knowledge makes exact ties frequent, exercising the tie rule
    vals = [v / 10 for v in values]
    assert build_adjacency(scalar_sks(vals), 0, M).matrix.tolist() == brute_adjacency(vals, M)


# -- merge -------------------------------------------------------------------

def test_merge_hand_example():
    g = merge_global_sk(scalar_sks([0.0, 0.1, 1.0]), 1, GlobalSK.zeros(1), 0)
    # merged rows 0.05, 0.05, 0.55
    assert g.per_class[0, 0] == pytest.approx((0.05 + 0.05 + 0.55) / 3, abs=1e-12)
    assert g.per_class[0, 0] == pytest.approx(0.216667, abs=5e-7)
    assert g.contributor_count.tolist() == [3]
    assert g.round == 0


def test_merge_identical_inputs_is_idempotent():
    v = np.array([0.4, -0.1, 2.0])
    sks = [LocalSK(k, np.tile(v, (3, 1)), np.ones(3, bool), np.ones(3, int)) for k in range(4)]
    g = merge_global_sk(sks, 2, GlobalSK.zeros(3), 1)
    np.testing.assert_allclose(g.per_class, np.tile(v, (3, 1)), atol=1e-15)


def test_merge_missing_class_keeps_previous_bitwise():
    prev = GlobalSK(3, np.arange(4.0).reshape(2, 2) / 7, np.array([2, 1]))
    sks = [LocalSK(0, np.array([[1.0, 2.0], [0.0, 0.0]]), np.array([True, False]), np.array([5, 0]))]
    g = merge_global_sk(sks, 1, prev, 4)
    assert g.per_class[1].tobytes() == prev.per_class[1].tobytes()
    assert g.contributor_count.tolist() == [1, 0]


def test_merge_missing_class_is_stable_over_rounds():
    sks = [LocalSK(0, np.array([[1.0, 2.0], [0.0, 0.0]]), np.array([True, False]), np.array([5, 0]))]
    g = GlobalSK(0, np.array([[0.0, 0.0], [0.3, -0.7]]), np.array([0, 1]))
    start = g.per_class[1].tobytes()
    for r in range(1, 6):
        g = merge_global_sk(sks, 1, g, r)
        assert g.per_class[1].tobytes() == start


def test_merge_round_zero_fallback_is_zero():
    sks = [LocalSK(0, np.array([[1.0, 2.0], [0.0, 0.0]]), np.array([True, False]), np.array([5, 0]))]
    g = merge_global_sk(sks, 0, GlobalSK.zeros(2), 0)
    np.testing.assert_array_equal(g.per_class[1], [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 8), M=st.integers(0, 4))
def test_merge_is_permutation_invariant(seed, K, M):
    rng = np.random.default_rng(seed)
    sks = random_sks(rng, K, 3)
    prev = GlobalSK(0, rng.normal(size=(3, 3)), np.zeros(3, int))
    a = merge_global_sk(sks, M, prev, 1)
    b = merge_global_sk([sks[i] for i in rng.permutation(K)], M, prev, 1)
    np.testing.assert_allclose(a.per_class, b.per_class, rtol=1e-12, atol=1e-14)


def test_global_sk_byte_round_trip():
    g = GlobalSK(7, np.random.default_rng(0).normal(size=(3, 3)), np.array([1, 0, 4]))
    back, end = GlobalSK.from_bytes(g.to_bytes())
    assert end == len(g.to_bytes())
    assert back.round == 7
    assert back.per_class.tobytes() == g.per_class.tobytes()
    assert back.contributor_count.tolist() == [1, 0, 4]


# -- discrepancy and variance ------------------------------------------------

def two_class_local(vecs, present):
    return LocalSK(0, np.asarray(vecs, dtype=np.float64), np.asarray(present), np.asarray(present, int))


def test_discrepancy_hand_example():
    local = two_class_local([[1.0, 0.0], [0.0, 1.0]], [True, True])
    g = GlobalSK(0, np.array([[0.0, 0.0], [0.0, 1.0]]), np.array([1, 1]))
    assert discrepancy(local, g) == pytest.approx(1.0, abs=1e-12)


def test_discrepancy_identity_is_zero():
    local = two_class_local([[1.0, 0.5], [0.0, 0.0]], [True, False])
    g = GlobalSK(0, np.array([[1.0, 0.5], [9.0, 9.0]]), np.array([1, 1]))
    assert discrepancy(local, g) == 0.0
    # absent class would cost ||(9, 9)|| under the experimental zero mode
    assert discrepancy(local, g, absent="zero") == pytest.approx(9 * np.sqrt(2))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.0, 50.0))
def test_discrepancy_is_homogeneous(seed, t):
    rng = np.random.default_rng(seed)
    local = random_sks(rng, 1, 4)[0]
    g = GlobalSK(0, rng.normal(size=(4, 4)), np.ones(4, int))
    scaled = LocalSK(0, local.per_class * t, local.present, local.counts)
    gs = GlobalSK(0, g.per_class * t, g.contributor_count)
    assert discrepancy(scaled, gs) == pytest.approx(t * discrepancy(local, g), rel=1e-12, abs=1e-12)


def test_variance_examples():
    g = GlobalSK(0, np.array([[0.0, 2.0], [3.0, 3.0]]), np.array([1, 1]))
    assert sk_variance(g, 0) == pytest.approx(1.0, abs=1e-15)
    assert sk_variance(g, 1) == 0.0
    np.testing.assert_array_equal(sk_variances(g), [1.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-100, 100))
def test_variance_is_shift_invariant(seed, shift):
    per_class = np.random.default_rng(seed).normal(size=(3, 3))
    a = GlobalSK(0, per_class, np.ones(3, int))
    b = GlobalSK(0, per_class + shift, np.ones(3, int))
    for j in range(3):
        assert sk_variance(a, j) == pytest.approx(sk_variance(b, j), rel=1e-9, abs=1e-9)
