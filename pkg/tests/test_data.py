
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedskc.data import (PartitionManifest, checksum_indices, dirichlet_partition, longtail_profile,
                         sample_dirichlet, sample_gamma, synth_dataset)
from fedskc.rng import fnv1a64, stream


def blobs(C=4, per_class=50, seed=0, dim=3):
    return synth_dataset(C, [per_class] * C, dim, 3.0, 1.0, stream(seed, "data"))


# -- long-tail profile -------------------------------------------------------

def test_balanced_profile():
    assert longtail_profile(10, 100, 1.0) == [100] * 10


def test_profile_endpoints_and_interior():
    prof = longtail_profile(10, 100, 100.0)
    assert prof[0] == 100
    assert prof[9] == 1
    assert prof[3] == round(100 * 100 ** (-3 / 9)) == 22


def test_profile_needs_two_classes():
    with pytest.raises(ValueError):
        longtail_profile(1, 100, 10.0)


@settings(max_examples=100, deadline=None)
@given(C=st.integers(2, 50), n_max=st.integers(1, 5000), rho=st.floats(1.0, 1000.0))
def test_profile_is_non_increasing_and_positive(C, n_max, rho):
    prof = longtail_profile(C, n_max, rho)
    assert all(a >= b for a, b in zip(prof, prof[1:]))
    assert min(prof) >= 1 and prof[0] == n_max


# -- synthetic data ----------------------------------------------------------

def test_zero_noise_collapses_onto_centers():
    d = synth_dataset(3, [4, 5, 6], 4, 2.0, 0.0, stream(1, "data"))
    for j in range(3):
        rows = d.x[d.y == j]
        assert np.all(rows == rows[0])
        assert np.linalg.norm(rows[0]) == pytest.approx(2.0, rel=1e-12)


def test_synth_is_deterministic():
    a, b = blobs(seed=5), blobs(seed=5)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_synth_counts_match_profile():
    counts = longtail_profile(6, 40, 10.0)
    d = synth_dataset(6, counts, 5, 1.0, 0.5, stream(0, "data"))
    assert d.class_counts.tolist() == counts


# -- gamma / dirichlet -------------------------------------------------------

@pytest.mark.parametrize("shape", [0.1, 0.5, 1.0, 2.5, 10.0])
def test_gamma_sampler_moments(shape):
    rng = stream(3, "gamma")
    draws = np.exp([sample_gamma(shape, rng) for _ in range(20000)])
    # Gamma(k, 1): mean k, variance k
    assert draws.mean() == pytest.approx(shape, rel=0.05)
    assert draws.var() == pytest.approx(shape, rel=0.1)


def test_dirichlet_small_alpha_stays_normalized():
    rng = stream(0, "dir")
    for _ in range(200):
        p = sample_dirichlet(0.01, 10, rng)
        assert np.isfinite(p).all()
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


# -- partition ---------------------------------------------------------------

def test_single_client_gets_everything():
    d = blobs()
    clients, manifest = dirichlet_partition(d, 1, 0.3, stream(0, "p"))
    assert len(clients[0]) == len(d)
    assert manifest.counts == [d.class_counts.tolist()]


@settings(max_examples=100, deadline=None)
@given(K=st.integers(1, 12), alpha=st.floats(0.01, 100.0), seed=st.integers(0, 10**6))
def test_partition_conserves_samples(K, alpha, seed):
    d = blobs(C=3, per_class=17, seed=seed % 7)
    clients, manifest = dirichlet_partition(d, K, alpha, stream(seed, "p"))
    union = np.concatenate([c.indices for c in clients])
    assert sorted(union.tolist()) == list(range(len(d)))
    assert np.asarray(manifest.counts).sum(axis=0).tolist() == d.class_counts.tolist()
    for c in clients:
        assert c.per_class_counts.sum() == len(c)
        assert np.array_equal(c.x, d.x[c.indices]) and np.array_equal(c.y, d.y[c.indices])


def test_huge_alpha_is_nearly_even():
    # Monte-Carlo oracle: 100 seeded trials, each client should hold 100 +- 5 of every class
    d = synth_dataset(3, [400] * 3, 2, 1.0, 1.0, stream(0, "data"))
    ok = 0
    for trial in range(100):
        clients, _ = dirichlet_partition(d, 4, 1e6, stream(trial, "p"))
        counts = np.array([c.per_class_counts for c in clients])
        ok += bool(np.all(np.abs(counts - 100) <= 5))
    assert ok >= 95


def test_small_alpha_is_skewed():
    d = synth_dataset(10, [200] * 10, 2, 1.0, 1.0, stream(0, "data"))
    clients, _ = dirichlet_partition(d, 10, 0.1, stream(0, "p"))
    counts = np.array([c.per_class_counts for c in clients])
    # most of each class sits on one or two clients
    top2 = np.sort(counts, axis=0)[-2:].sum(axis=0) / 200
    assert np.median(top2) > 0.7


def test_partition_is_deterministic():
    d = blobs()
    a = dirichlet_partition(d, 5, 0.5, stream(9, "p"))[1]
    b = dirichlet_partition(d, 5, 0.5, stream(9, "p"))[1]
    assert a == b


# -- manifest ----------------------------------------------------------------

def test_manifest_round_trip(tmp_path):
    d = blobs()
    _, manifest = dirichlet_partition(d, 5, 0.5, stream(2, "p"), seed=2, rho=1.0)
    path = tmp_path / "m.json"
    manifest.write(path)
    back = PartitionManifest.read(path)
    assert back == manifest
    assert len(back.checksum) == 16 and int(back.checksum, 16) >= 0


def test_checksum_is_fnv1a_over_little_endian_indices():
    # FNV-1a 64 of the empty string is the offset basis
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    expected = fnv1a64(b"".join(i.to_bytes(8, "little") for i in [3, 1, 2]))
    assert checksum_indices([np.array([3]), np.array([1, 2])]) == f"{expected:016x}"


def test_checksum_depends_on_order():
    assert checksum_indices([np.array([0, 1])]) != checksum_indices([np.array([1, 0])])
