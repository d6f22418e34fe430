import numpy as np
import pytest

from pulsefam import clustering as cl


def _block_similarity(sizes, within=10.0, cross=0.01):
    m = sum(sizes)
    w = np.full((m, m), cross)
    start = 0
    for s in sizes:
        w[start:start + s, start:start + s] = within
        start += s
    np.fill_diagonal(w, 1e4)
    return cl.SimilarityMatrix(w), np.repeat(np.arange(len(sizes)), sizes)


def test_similarity_weight_values():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    sim = cl.similarity_from_distances(d, epsilon=1e-4)
    assert sim.entries[0, 0] == pytest.approx(1e4)
    assert sim.entries[0, 1] == pytest.approx(1.0 / (1.0 + 1e-4))


def test_similarity_symmetric_output():
    rng = np.random.default_rng(0)
    d = rng.uniform(0.1, 1.0, (6, 6))
    sim = cl.similarity_from_distances(d)
    assert np.max(np.abs(sim.entries - sim.entries.T)) < 1e-12


def test_similarity_distance_recovery():
    d = np.array([[0.0, 0.7], [0.7, 0.0]])
    sim = cl.similarity_from_distances(d)
    assert np.allclose(sim.distances(), d, atol=1e-12)


def test_spectral_k1():
    sim, _ = _block_similarity([4, 4])
    labels = cl.spectral_cluster(sim, 1)
    assert np.all(labels.labels == 0)
    assert labels.k == 1


def test_spectral_two_blocks_exact():
    sim, truth = _block_similarity([4, 4])
    labels = cl.spectral_cluster(sim, 2, seed=0)
    assert cl.match_probability(labels, truth) == 1.0
    # exact recovery up to label permutation at M = 8
    assert len(set(zip(labels.labels, truth))) == 2


def test_spectral_three_blocks_exact():
    sim, truth = _block_similarity([5, 4, 6])
    labels = cl.spectral_cluster(sim, 3, seed=1)
    assert cl.match_probability(labels, truth) == 1.0


def test_spectral_each_own_cluster():
    rng = np.random.default_rng(2)
    d = rng.uniform(1.0, 2.0, (5, 5))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    sim = cl.similarity_from_distances(d)
    labels = cl.spectral_cluster(sim, 5, seed=0)
    assert sorted(labels.labels) == [0, 1, 2, 3, 4]


def test_spectral_k_out_of_range():
    sim, _ = _block_similarity([3, 3])
    with pytest.raises(ValueError):
        cl.spectral_cluster(sim, 7)
    with pytest.raises(ValueError):
        cl.spectral_cluster(sim, 0)


def test_spectral_deterministic():
    sim, _ = _block_similarity([5, 5, 5], within=3.0, cross=0.5)
    a = cl.spectral_cluster(sim, 3, seed=42)
    b = cl.spectral_cluster(sim, 3, seed=42)
    assert np.array_equal(a.labels, b.labels)


def test_elbow_three_blocks():
    sim, _ = _block_similarity([7, 7, 7])
    res = cl.elbow_k(sim, 5, seed=0)
    assert res.k == 3
    assert res.confident


def test_elbow_two_blocks():
    sim, _ = _block_similarity([8, 8])
    res = cl.elbow_k(sim, 5, seed=0)
    assert res.k == 2
    assert res.confident


def test_elbow_featureless_blob_flagged():
    rng = np.random.default_rng(3)
    d = rng.uniform(0.95, 1.05, (12, 12))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    res = cl.elbow_k(cl.similarity_from_distances(d), 5, seed=0)
    assert not res.confident
    assert res.k == 1


def test_elbow_k_max_validation():
    sim, _ = _block_similarity([4, 4])
    with pytest.raises(ValueError):
        cl.elbow_k(sim, 2)


def test_match_probability_perfect():
    labels = np.array([0, 0, 1, 1, 2])
    assert cl.match_probability(labels, labels) == 1.0


def test_match_probability_all_in_one():
    # M = 21, three true families of 7; found = single cluster.
    # brute-force oracle over ordered pairs including the diagonal
    truth = np.repeat([0, 1, 2], 7)
    found = np.zeros(21, dtype=int)
    num = sum(1 for i in range(21) for j in range(21) if truth[i] == truth[j])
    den = 21 * 21
    assert cl.match_probability(found, truth) == pytest.approx(num / den)
    assert num / den == pytest.approx((3 * 49) / 441)


def test_match_probability_one_moved():
    truth = np.array([0, 0, 0, 1, 1, 1])
    found = np.array([0, 0, 1, 1, 1, 1])
    num = sum(1 for i in range(6) for j in range(6)
              if found[i] == found[j] and truth[i] == truth[j])
    den = sum(1 for i in range(6) for j in range(6) if found[i] == found[j])
    assert cl.match_probability(found, truth) == pytest.approx(num / den)


def test_match_probability_label_permutation_invariant():
    rng = np.random.default_rng(4)
    truth = rng.integers(0, 3, 15)
    found = rng.integers(0, 3, 15)
    p0 = cl.match_probability(found, truth)
    perm = np.array([2, 0, 1])
    assert cl.match_probability(perm[found], truth) == pytest.approx(p0)
    assert cl.match_probability(found, perm[truth]) == pytest.approx(p0)


def test_match_probability_diagonal_flag():
    truth = np.array([0, 1])
    found = np.array([0, 0])
    # with diagonal: 2 correct of 4 found pairs; without: 0 of 2
    assert cl.match_probability(found, truth) == pytest.approx(0.5)
    assert cl.match_probability(found, truth, include_diagonal=False) == 0.0


def test_match_probability_length_mismatch():
    with pytest.raises(ValueError):
        cl.match_probability(np.zeros(3), np.zeros(4))
