import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commonatoms.model import ValidationError
from commonatoms.summaries import (PartitionEstimate, abundance_classes, ari,
                                   canonical_labels, class_map_by_intensity,
                                   coclustering, crf, expected_vi_lower_bound,
                                   hierarchical_candidates,
                                   minimize_expected_vi, nfd, pcm, pcm_edges,
                                   true_coclustering, vi)


# ---------------------------------------------------------------------------
# vi


def test_vi_identical_partitions():
    assert vi([0, 1, 1, 2], [0, 1, 1, 2]) == 0.0


def test_vi_one_block_vs_singletons():
    assert vi([0, 0, 0, 0], [0, 1, 2, 3]) == pytest.approx(np.log(4.0),
                                                           abs=1e-12)


def test_vi_symmetry_and_permutation_invariance():
    gen = np.random.default_rng(0)
    for _ in range(20):
        p1 = gen.integers(0, 4, size=30)
        p2 = gen.integers(0, 3, size=30)
        assert vi(p1, p2) == pytest.approx(vi(p2, p1), abs=1e-12)
        relabel = gen.permutation(4)[p1]
        assert vi(relabel, p2) == pytest.approx(vi(p1, p2), abs=1e-12)


def test_vi_length_mismatch():
    with pytest.raises(ValidationError):
        vi([0, 1], [0, 1, 2])


# ---------------------------------------------------------------------------
# ari


def test_ari_identical():
    assert ari([0, 0, 1], [5, 5, 7]) == 1.0


def test_ari_hand_value():
    # {{1,2},{3}} vs {{1},{2,3}}
    assert ari([0, 0, 1], [0, 1, 1]) == pytest.approx(-0.5, abs=1e-12)


def test_ari_permutation_invariance():
    gen = np.random.default_rng(1)
    p1 = gen.integers(0, 5, size=60)
    p2 = gen.integers(0, 4, size=60)
    base = ari(p1, p2)
    for _ in range(10):
        assert ari(gen.permutation(5)[p1], p2) == pytest.approx(base,
                                                                abs=1e-12)


# ---------------------------------------------------------------------------
# nfd


def test_nfd_zero_for_equal():
    a = np.random.default_rng(2).random((4, 4))
    assert nfd(a, a) == 0.0


def test_nfd_plugin():
    assert nfd(np.zeros((2, 2)), np.ones((2, 2))) == pytest.approx(1.0)


def test_nfd_matches_naive_double_loop():
    gen = np.random.default_rng(3)
    for _ in range(10):
        a = gen.random((6, 6))
        b = gen.random((6, 6))
        naive = sum((a[i, j] - b[i, j]) ** 2
                    for i in range(6) for j in range(6)) / 36.0
        assert nfd(a, b) == pytest.approx(naive, abs=1e-12)
        assert nfd(a, b) == pytest.approx(nfd(b, a), abs=1e-15)


# ---------------------------------------------------------------------------
# crf


def test_crf_example():
    assert np.allclose(crf([5, 3, 2]), [0.5, 0.8, 1.0], atol=1e-12)


def test_crf_single_count():
    assert np.allclose(crf([7]), [1.0])


def test_crf_last_is_one_and_sorted_descending():
    gen = np.random.default_rng(4)
    counts = gen.integers(0, 50, size=40)
    counts[0] = 3
    shares = crf(counts)
    assert shares[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(shares) >= 0)


def test_crf_rejects_all_zero():
    with pytest.raises(ValidationError):
        crf([0, 0, 0])


# ---------------------------------------------------------------------------
# coclustering


def test_coclustering_single_draw_binary():
    ccm = coclustering(np.array([[0, 0, 1]]))
    assert set(np.unique(ccm)) <= {0.0, 1.0}
    assert ccm[0, 1] == 1.0 and ccm[0, 2] == 0.0


def test_coclustering_two_draws_average():
    ccm = coclustering(np.array([[0, 0], [0, 1]]))
    assert ccm[0, 1] == pytest.approx(0.5)


def test_coclustering_diagonal_and_symmetry():
    draws = np.random.default_rng(5).integers(0, 3, size=(40, 7))
    ccm = coclustering(draws)
    assert np.allclose(np.diag(ccm), 1.0)
    assert np.allclose(ccm, ccm.T)
    assert np.all((ccm >= 0) & (ccm <= 1))


def test_coclustering_chunked_matches_direct():
    draws = np.random.default_rng(6).integers(0, 3, size=(33, 9))
    assert np.allclose(coclustering(draws, chunk=4), coclustering(draws))


# ---------------------------------------------------------------------------
# expected VI minimization


def _naive_lower_bound(labels, ccm):
    labels = np.asarray(labels)
    n = len(labels)
    total = 0.0
    for i in range(n):
        same = labels == labels[i]
        total += (np.log(same.sum()) + np.log(ccm[i].sum())
                  - 2.0 * np.log(ccm[i][same].sum()))
    return total / n


def test_lower_bound_matches_naive():
    gen = np.random.default_rng(7)
    draws = gen.integers(0, 3, size=(50, 12))
    ccm = coclustering(draws)
    for _ in range(10):
        labels = gen.integers(0, 4, size=12)
        assert expected_vi_lower_bound(labels, ccm) == pytest.approx(
            _naive_lower_bound(labels, ccm), abs=1e-12)


def test_minimizer_perfect_blocks():
    truth = np.array([0, 0, 0, 1, 1])
    ccm = true_coclustering(truth)
    est = minimize_expected_vi(ccm, sampled=np.array([truth]))
    assert ari(est.labels, truth) == 1.0
    assert est.expected_loss == pytest.approx(0.0, abs=1e-12)


def test_minimizer_single_item():
    est = minimize_expected_vi(np.array([[1.0]]))
    assert est.n_clusters == 1


def test_minimizer_is_argmin_over_pool():
    gen = np.random.default_rng(8)
    draws = gen.integers(0, 4, size=(200, 10))
    ccm = coclustering(draws)
    est = minimize_expected_vi(ccm, sampled=draws)
    pool = [row for row in draws] + hierarchical_candidates(ccm)
    best = min(_naive_lower_bound(c, ccm) for c in pool)
    assert est.expected_loss == pytest.approx(best, abs=1e-12)


def test_minimizer_respects_explicit_candidates():
    ccm = true_coclustering([0, 0, 1, 1])
    candidates = [np.array([0, 0, 0, 0]), np.array([0, 0, 1, 1])]
    est = minimize_expected_vi(ccm, candidates=candidates)
    assert est.provenance == "given"
    assert ari(est.labels, [0, 0, 1, 1]) == 1.0


def test_canonical_labels():
    assert np.array_equal(canonical_labels([5, 5, 2, 5, 9]),
                          [0, 0, 1, 0, 2])


# ---------------------------------------------------------------------------
# abundance classes and co-occurrence


def test_abundance_classes_identity_map():
    part = np.array([0, 1, 1, 2])
    out = abundance_classes(part, {0: 0, 1: 1, 2: 2})
    assert np.array_equal(out, part)


def test_abundance_classes_collapse_to_one():
    part = np.array([0, 1, 2, 1])
    out = abundance_classes(part, {0: 0, 1: 0, 2: 0})
    assert np.array_equal(out, np.zeros(4, dtype=int))


def test_abundance_classes_missing_label():
    with pytest.raises(ValidationError):
        abundance_classes(np.array([0, 3]), {0: 0})


def test_class_map_by_intensity_splits_at_gaps():
    intensity = {0: 0.1, 1: 0.2, 2: 5.0, 3: 5.3, 4: 11.0}
    cmap = class_map_by_intensity(intensity, 3)
    assert cmap == {0: 0, 1: 0, 2: 1, 3: 1, 4: 2}


def test_pcm_single_subject_binary():
    classes = np.array([[0], [0], [1]])
    matrix = pcm(classes, np.array([0]), 0)
    assert set(np.unique(matrix)) <= {0.0, 1.0}
    assert matrix[0, 1] == 1.0 and matrix[0, 2] == 0.0


def test_pcm_identical_subjects_all_ones():
    classes = np.tile(np.array([[0], [1], [2]]), (1, 4))
    matrix = pcm(classes, np.zeros(4, dtype=int), 0)
    assert np.allclose(np.diag(matrix), 1.0)
    assert matrix[0, 1] == 0.0


def test_pcm_half_agreement():
    classes = np.array([[0, 0], [0, 1]])
    matrix = pcm(classes, np.array([0, 0]), 0)
    assert matrix[0, 1] == pytest.approx(0.5)


def test_pcm_empty_cluster_rejected():
    with pytest.raises(ValidationError):
        pcm(np.zeros((2, 3), dtype=int), np.zeros(3, dtype=int), 4)


def test_pcm_edges_threshold():
    matrix = np.array([[1.0, 0.6, 0.4], [0.6, 1.0, 0.5], [0.4, 0.5, 1.0]])
    edges = pcm_edges(matrix, names=["a", "b", "c"])
    assert edges == [("a", "b", 0.6)]


# ---------------------------------------------------------------------------
# property-based invariances


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=4), min_size=2,
                max_size=25),
       st.integers(min_value=0, max_value=10_000))
def test_metrics_invariant_to_relabeling(labels, seed):
    labels = np.array(labels)
    gen = np.random.default_rng(seed)
    perm = gen.permutation(5)
    other = gen.integers(0, 3, size=len(labels))
    assert ari(perm[labels], other) == pytest.approx(ari(labels, other),
                                                     abs=1e-12)
    assert vi(perm[labels], other) == pytest.approx(vi(labels, other),
                                                    abs=1e-12)
    assert np.allclose(true_coclustering(perm[labels]),
                       true_coclustering(labels))
