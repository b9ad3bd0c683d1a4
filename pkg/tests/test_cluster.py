import numpy as np
import pytest

from oracles import (
    ap_reference,
    exhaustive_mst_weight,
    kruskal_weight,
    mean_silhouette_reference,
    mutual_reachability_matrix,
)
from namesplit.cluster import (
    adaptive_cluster,
    ap_cluster,
    combine_similarity,
    core_distances,
    hdbscan_cluster,
    mean_silhouette,
    minimum_spanning_tree,
    mst_total_weight,
    mutual_reachability,
    reassign_noise,
    similarity_to_distance,
)


def random_similarity(rng, n):
    X = rng.random((n, n)) * 2 - 1
    M = (X + X.T) / 2
    np.fill_diagonal(M, 1.0)
    return M


def planted_similarity(within=0.9, cross=0.0, sizes=(5, 5)):
    n = sum(sizes)
    M = np.full((n, n), cross)
    start = 0
    for s in sizes:
        M[start:start + s, start:start + s] = within
        start += s
    np.fill_diagonal(M, 1.0)
    return M


def same_partition(a, b):
    ga = {}
    gb = {}
    for i, (x, y) in enumerate(zip(a, b)):
        ga.setdefault(int(x), set()).add(i)
        gb.setdefault(int(y), set()).add(i)
    return sorted(map(sorted, ga.values())) == sorted(map(sorted, gb.values()))


class TestCombine:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.A = random_similarity(rng, 6)
        self.B = random_similarity(rng, 6)

    def test_beta_one(self):
        assert np.allclose(combine_similarity(self.A, self.B, 1.0), self.A)

    def test_beta_zero(self):
        assert np.allclose(combine_similarity(self.A, self.B, 0.0), self.B)

    def test_midpoint_arithmetic(self):
        A = planted_similarity(within=0.8, cross=0.8, sizes=(2,))
        B = planted_similarity(within=0.2, cross=0.2, sizes=(2,))
        A[0, 1] = A[1, 0] = 0.8
        B[0, 1] = B[1, 0] = 0.2
        M = combine_similarity(A, B, 0.5)
        assert np.isclose(M[0, 1], 0.5)

    def test_preserves_symmetry_and_diagonal(self):
        for beta in (0.0, 0.3, 0.7, 1.0):
            M = combine_similarity(self.A, self.B, beta)
            assert np.allclose(M, M.T)
            assert np.array_equal(np.diag(M), np.ones(6))

    def test_shape_and_beta_validation(self):
        with pytest.raises(ValueError):
            combine_similarity(self.A, self.B[:4, :4], 0.5)
        with pytest.raises(ValueError):
            combine_similarity(self.A, self.B, 1.5)


class TestMst:
    def test_weight_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(5)
        for trial in range(30):
            n = int(rng.integers(2, 8))
            M = random_similarity(rng, n)
            MR = mutual_reachability_matrix(M, min_samples=2)
            assert np.isclose(mst_total_weight(M, 2), exhaustive_mst_weight(MR))

    def test_weight_matches_kruskal_up_to_ten(self):
        rng = np.random.default_rng(6)
        for trial in range(40):
            n = int(rng.integers(8, 11))
            M = random_similarity(rng, n)
            MR = mutual_reachability_matrix(M, min_samples=2)
            assert np.isclose(mst_total_weight(M, 2), kruskal_weight(MR))

    def test_mutual_reachability_definition(self):
        rng = np.random.default_rng(7)
        M = random_similarity(rng, 9)
        D = similarity_to_distance(M)
        MR = mutual_reachability(D, core_distances(D, 3))
        assert np.allclose(MR, mutual_reachability_matrix(M, 3))

    def test_planted_instance_weight(self):
        # 8 within-block edges at 0.1 plus one cross edge at 1.0
        M = planted_similarity()
        assert np.isclose(mst_total_weight(M, 2), 8 * 0.1 + 1.0)

    def test_tree_edge_count(self):
        rng = np.random.default_rng(8)
        M = random_similarity(rng, 12)
        D = similarity_to_distance(M)
        edges = minimum_spanning_tree(mutual_reachability(D, core_distances(D, 2)))
        assert len(edges) == 11


class TestHdbscan:
    def test_planted_two_blocks(self):
        M = planted_similarity()
        out = hdbscan_cluster(M, min_cluster_size=3, min_samples=2)
        assert out.n_clusters == 2
        assert (out.labels >= 0).all()
        assert len(set(out.labels[:5])) == 1 and len(set(out.labels[5:])) == 1
        assert out.labels[0] != out.labels[5]

    def test_all_identical_single_cluster(self):
        M = np.ones((6, 6))
        out = hdbscan_cluster(M, min_cluster_size=3, min_samples=2)
        assert out.n_clusters == 1
        assert (out.labels == 0).all()

    def test_too_small_all_noise(self):
        M = planted_similarity(sizes=(2,))
        out = hdbscan_cluster(M, min_cluster_size=3, min_samples=2)
        assert out.n_clusters == 0
        assert (out.labels == -1).all()

    def test_three_blocks(self):
        M = planted_similarity(sizes=(4, 4, 4))
        out = hdbscan_cluster(M, min_cluster_size=2, min_samples=2)
        assert out.n_clusters == 3

    def test_param_validation(self):
        with pytest.raises(ValueError):
            hdbscan_cluster(np.eye(4), min_cluster_size=1)

    def test_noise_for_outlier(self):
        M = planted_similarity(sizes=(4, 4, 1), within=0.9, cross=0.0)
        out = hdbscan_cluster(M, min_cluster_size=3, min_samples=2)
        assert out.labels[-1] == -1
        assert out.n_clusters == 2


class TestAffinityPropagation:
    def test_two_blocks(self):
        M = planted_similarity()
        out = ap_cluster(M)
        assert out.n_clusters == 2
        assert len(set(out.labels[:5])) == 1 and len(set(out.labels[5:])) == 1

    def test_single_point(self):
        out = ap_cluster(np.ones((1, 1)))
        assert out.n_clusters == 1 and out.labels.tolist() == [0]

    def test_identical_rows_single_cluster(self):
        n = 6
        M = np.full((n, n), 0.4)
        np.fill_diagonal(M, 1.0)
        out = ap_cluster(M, preference=0.4)
        ref, _ = ap_reference(M, preference=0.4)
        assert same_partition(out.labels, ref)
        assert out.n_clusters == 1

    def test_damping_validated(self):
        with pytest.raises(ValueError):
            ap_cluster(np.eye(3), damping=0.4)

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_reference_iteration(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(4, 16))
        if seed % 2:
            sizes = []
            left = n
            while left > 0:
                s = int(min(left, rng.integers(2, 5)))
                sizes.append(s)
                left -= s
            M = planted_similarity(within=0.8, cross=0.1, sizes=tuple(sizes))
            M += (rng.random((n, n)) - 0.5) * 0.1
            M = (M + M.T) / 2
            np.fill_diagonal(M, 1.0)
        else:
            M = random_similarity(rng, n)
        out = ap_cluster(M)
        ref_labels, ref_conv = ap_reference(M)
        assert same_partition(out.labels, ref_labels)
        assert out.converged == ref_conv

    def test_shift_invariance_exact_on_dyadic_grid(self):
        # dyadic entries and shifts make every float op exact, so the
        # invariance is bit-level, not approximate
        rng = np.random.default_rng(9)
        for shift in (0.25, -0.5, 2.0):
            n = 8
            grid = rng.integers(-64, 65, size=(n, n)) / 64.0
            M = (grid + grid.T) / 2
            np.fill_diagonal(M, 1.0)
            base = ap_cluster(M, preference=-0.5)
            shifted = M + shift
            np.fill_diagonal(shifted, 1.0)
            moved = ap_cluster(shifted, preference=-0.5 + shift)
            assert np.array_equal(base.labels, moved.labels)

    def test_non_convergence_flagged(self):
        rng = np.random.default_rng(10)
        M = random_similarity(rng, 10)
        out = ap_cluster(M, max_iter=2)
        assert out.converged is False


class TestSilhouette:
    def test_matches_reference(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(3, 12))
            M = random_similarity(rng, n)
            D = similarity_to_distance(M)
            labels = rng.integers(0, 3, size=n)
            assert np.isclose(
                mean_silhouette(D, labels), mean_silhouette_reference(D, labels)
            )

    def test_single_cluster_zero(self):
        D = similarity_to_distance(planted_similarity(sizes=(4,)))
        assert mean_silhouette(D, np.zeros(4, dtype=int)) == 0.0

    def test_clean_split_positive(self):
        M = planted_similarity()
        D = similarity_to_distance(M)
        labels = np.array([0] * 5 + [1] * 5)
        assert mean_silhouette(D, labels) > 0.5


class TestAdaptive:
    def test_agreement_case(self):
        M = planted_similarity()
        out = adaptive_cluster(M)
        h = hdbscan_cluster(M)
        a = ap_cluster(M)
        assert same_partition(h.labels, a.labels)
        assert same_partition(out.labels, h.labels)
        assert out.method == "adaptive"

    def test_no_structure_single_cluster_everyone_labeled(self):
        M = np.full((7, 7), 0.6)
        np.fill_diagonal(M, 1.0)
        out = adaptive_cluster(M)
        assert (out.labels >= 0).all()
        assert out.n_clusters == 1

    def test_returned_silhouette_is_max(self):
        rng = np.random.default_rng(12)
        # noisy five-entity block similarity
        M = planted_similarity(within=0.7, cross=0.1, sizes=(10,) * 5)
        M += (rng.random((50, 50)) - 0.5) * 0.2
        M = np.clip((M + M.T) / 2, -1, 1)
        np.fill_diagonal(M, 1.0)
        out = adaptive_cluster(M)
        D = similarity_to_distance(M)
        h = reassign_noise(M, hdbscan_cluster(M), tau=0.1)
        a = ap_cluster(M)
        best = max(
            mean_silhouette_reference(D, h.labels),
            mean_silhouette_reference(D, a.labels),
        )
        assert np.isclose(mean_silhouette_reference(D, out.labels), best)

    def test_noise_reassignment_threshold(self):
        M = planted_similarity(sizes=(4, 4, 1), within=0.9, cross=0.0)
        h = hdbscan_cluster(M, min_cluster_size=3, min_samples=2)
        assert h.labels[-1] == -1
        # cross similarity 0 < tau: the outlier becomes a singleton
        out = reassign_noise(M, h, tau=0.1)
        assert out.labels[-1] == 2 and out.n_clusters == 3
        # with similarity above tau it joins the closest cluster
        M2 = M.copy()
        M2[-1, :4] = M2[:4, -1] = 0.3
        h2 = hdbscan_cluster(M2, min_cluster_size=3, min_samples=2)
        if (h2.labels[-1] == -1):
            out2 = reassign_noise(M2, h2, tau=0.1)
            assert out2.labels[-1] == out2.labels[0]

    def test_no_noise_in_output_and_dense_ids(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            M = random_similarity(rng, int(rng.integers(3, 14)))
            out = adaptive_cluster(M)
            assert (out.labels >= 0).all()
            assert set(out.labels.tolist()) == set(range(out.n_clusters))
