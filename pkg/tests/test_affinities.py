import math

import numpy as np
import pytest

from tnfspectral import AFFINITY_REGISTRY, AffinityMethod
from tnfspectral.affinities.common_neighbors import cnn_affinity
from tnfspectral.affinities.composition import compose_kernels, density_kernel, structural_kernel
from tnfspectral.affinities.gaussian import gaussian_affinity
from tnfspectral.affinities.self_tuning import local_scales, self_tuning_affinity
from tnfspectral.affinities.topological import log_base_divisor, tnf1_affinity, tnf2_affinity
from tnfspectral.affinity_matrix import AffinityMatrix
from tnfspectral.datasets import LabeledDataset
from tnfspectral.neighborhood_graph import build_epsilon_graph, common_neighbor_matrix, pairwise_distances
from tnfspectral.pipeline import build_affinity, build_graph_context, discover_affinities
from tnfspectral.tnf_features import compute_tnf_profile, zeta_matrix


@pytest.fixture
def context(blobs_factory):
    dataset = blobs_factory([(0.0, 0.0), (3.0, 0.0)], per_blob=8, spread=0.5, seed=4)
    return build_graph_context(dataset, epsilon_quantile=0.3)


@pytest.fixture
def complete_graph(graph_factory):
    return graph_factory(~np.eye(4, dtype=bool))


class TestAffinityMatrix:
    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ValueError, match="zero diagonal"):
            AffinityMatrix(values=np.eye(2), method=AffinityMethod.GAUSSIAN)

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match="negative entries"):
            AffinityMatrix(values=np.array([[0.0, -1.0], [-1.0, 0.0]]), method=AffinityMethod.GAUSSIAN)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="exactly symmetric"):
            AffinityMatrix(values=np.array([[0.0, 1.0], [0.5, 0.0]]), method=AffinityMethod.GAUSSIAN)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="NaN or Inf"):
            AffinityMatrix(values=np.array([[0.0, np.inf], [np.inf, 0.0]]), method=AffinityMethod.GAUSSIAN)

    def test_method_must_be_enum(self):
        with pytest.raises(TypeError, match="must be an AffinityMethod"):
            AffinityMatrix(values=np.zeros((2, 2)), method="gaussian")


class TestGaussian:
    def test_formula(self):
        dataset = LabeledDataset(points=np.array([[0.0, 0.0], [3.0, 4.0]]), name="pair")
        affinity = gaussian_affinity(pairwise_distances(dataset), sigma=2.0)

        assert affinity.values[0, 1] == pytest.approx(math.exp(-25 / 8))
        np.testing.assert_array_equal(np.diagonal(affinity.values), 0.0)
        assert affinity.method is AffinityMethod.GAUSSIAN
        assert affinity.params == {"sigma": 2.0}

    @pytest.mark.parametrize("sigma", [0.0, -1.0, math.nan])
    def test_sigma_must_be_positive(self, context, sigma):
        with pytest.raises(ValueError, match="sigma must be positive"):
            gaussian_affinity(context.distances, sigma)

    def test_far_points_underflow_to_zero(self):
        dataset = LabeledDataset(points=np.array([[0.0], [1e6]]), name="far")
        affinity = gaussian_affinity(pairwise_distances(dataset), sigma=0.01)
        np.testing.assert_array_equal(affinity.values, 0.0)


class TestCommonNeighbors:
    def test_formula(self, triangle_with_tail):
        affinity = cnn_affinity(triangle_with_tail.distances, triangle_with_tail, sigma=1.0)
        # nodes 0 and 3 are at distance 2 and share node 2
        assert affinity.values[0, 3] == pytest.approx(math.exp(-4 / (2 * 2)))
        # nodes 0 and 1 are at distance 1 and share node 2
        assert affinity.values[0, 1] == pytest.approx(math.exp(-1 / (2 * 2)))

    def test_equals_gaussian_without_shared_neighbors(self, context):
        """With an empty graph the CNN kernel reduces exactly to the Gaussian kernel."""
        graph = build_epsilon_graph(context.distances, epsilon=1e-9)
        cnn = cnn_affinity(context.distances, graph, sigma=0.7)
        gaussian = gaussian_affinity(context.distances, sigma=0.7)
        np.testing.assert_array_equal(cnn.values, gaussian.values)

    def test_shared_neighbors_increase_affinity(self, context):
        cnn = build_affinity("cnn", context, sigma=0.7)
        gaussian = build_affinity("gaussian", context, sigma=0.7)
        assert np.all(cnn.values >= gaussian.values)
        assert cnn.params["epsilon"] == context.epsilon


class TestSelfTuning:
    def test_local_scales(self):
        dataset = LabeledDataset(points=np.array([[0.0], [1.0], [3.0], [6.0]]), name="line")
        distances = pairwise_distances(dataset)
        np.testing.assert_array_equal(local_scales(distances, 1), [1.0, 1.0, 2.0, 3.0])
        np.testing.assert_array_equal(local_scales(distances, 2), [3.0, 2.0, 3.0, 5.0])

    def test_formula(self):
        dataset = LabeledDataset(points=np.array([[0.0], [1.0], [3.0]]), name="line")
        affinity = self_tuning_affinity(pairwise_distances(dataset), K=1)
        # scales: 1, 1, 2
        assert affinity.values[0, 2] == pytest.approx(math.exp(-9 / 2))
        assert affinity.values[0, 1] == pytest.approx(math.exp(-1))
        assert affinity.params == {"K": 1}

    @pytest.mark.parametrize("K", [0, 3])
    def test_k_out_of_range(self, K):
        dataset = LabeledDataset(points=np.array([[0.0], [1.0], [3.0]]), name="line")
        with pytest.raises(ValueError, match="K must satisfy"):
            local_scales(pairwise_distances(dataset), K)

    def test_duplicates_give_zero_scale(self):
        dataset = LabeledDataset(points=np.array([[0.0], [0.0], [5.0]]), name="dupes")
        with pytest.raises(ValueError, match="Zero local scale at point 0"):
            local_scales(pairwise_distances(dataset), 1)

    def test_builder_clips_k(self, context):
        affinity = build_affinity("self-tuning", context, self_tuning_k=100)
        assert affinity.params == {"K": context.distances.n_points - 1}

    def test_builder_ignores_sigma(self, context):
        first = build_affinity("self-tuning", context, sigma=None, self_tuning_k=3)
        second = build_affinity("self-tuning", context, sigma=5.0, self_tuning_k=3)
        np.testing.assert_array_equal(first.values, second.values)


class TestTopological:
    def test_tnf1_equal_density_gives_eta(self, complete_graph):
        """On a complete graph every node has the same phi, so delta = 0 and beta = eta."""
        tnf = compute_tnf_profile(complete_graph)
        beta = tnf1_affinity(complete_graph.distances, complete_graph, tnf, sigma=0.01)

        expected = np.full((4, 4), 2.0)
        np.fill_diagonal(expected, 0.0)
        np.testing.assert_array_equal(beta.values, expected)

    def test_tnf1_eta_smoothing(self, complete_graph):
        tnf = compute_tnf_profile(complete_graph)
        beta = tnf1_affinity(complete_graph.distances, complete_graph, tnf, sigma=0.01, eta_smoothing=True)
        assert beta.values[0, 1] == 3.0
        assert beta.params["eta_smoothing"] is True

    def test_tnf1_formula(self, triangle_with_tail):
        tnf = compute_tnf_profile(triangle_with_tail, phi_mode="nodes")
        beta = tnf1_affinity(triangle_with_tail.distances, triangle_with_tail, tnf, sigma=1.0)
        # phi = [2, 2, 2, 0]: pair (0, 3) has d = 2, delta = 2, eta = 1
        assert beta.values[0, 3] == pytest.approx(math.exp(-4 * 2 / 2))
        # pair (0, 1) has delta = 0 and eta = 1
        assert beta.values[0, 1] == 1.0
        # nodes 2 and 3 share no neighbor
        assert beta.values[2, 3] == 0.0

    def test_tnf1_support_within_shared_neighbors(self, context):
        beta = build_affinity("tnf1", context, sigma=0.5)
        assert np.all((beta.values > 0) <= (context.shared_neighbors > 0))

    def test_tnf1_size_mismatch(self, context, triangle_with_tail):
        tnf = compute_tnf_profile(triangle_with_tail)
        with pytest.raises(ValueError, match="Inconsistent sizes"):
            tnf1_affinity(context.distances, context.graph, tnf, sigma=1.0)

    def test_tnf2_bounds(self, context):
        beta = build_affinity("tnf1", context, sigma=0.5)
        amplified = tnf2_affinity(beta, context.tnf)

        assert np.all(amplified.values >= beta.values)
        assert np.all(amplified.values <= 2 * beta.values)
        identical = context.zeta == 0
        np.testing.assert_array_equal(amplified.values[identical], 2 * beta.values[identical])

    def test_tnf2_requires_tnf1(self, context):
        gaussian = build_affinity("gaussian", context, sigma=0.5)
        with pytest.raises(ValueError, match="TNF2 amplifies a TNF1 affinity"):
            tnf2_affinity(gaussian, context.tnf)

    def test_tnf2_params(self, context):
        amplified = build_affinity("tnf2", context, sigma=0.5, log_base="10")
        assert amplified.method is AffinityMethod.TNF2
        assert amplified.params["log_base"] == "10"
        assert amplified.params["sigma"] == 0.5

    def test_larger_log_base_amplifies_more(self, context):
        beta = build_affinity("tnf1", context, sigma=0.5)
        natural = tnf2_affinity(beta, context.tnf, log_base="e")
        decimal = tnf2_affinity(beta, context.tnf, log_base=10)
        assert np.all(decimal.values >= natural.values)

    @pytest.mark.parametrize(("log_base", "expected"), [("e", 1.0), ("10", math.log(10)), (2.0, math.log(2))])
    def test_log_base_divisor(self, log_base, expected):
        assert log_base_divisor(log_base) == pytest.approx(expected)

    def test_unsupported_log_base(self):
        with pytest.raises(ValueError, match="Unsupported log base"):
            log_base_divisor("3")


class TestComposition:
    def test_without_kernels_keeps_values(self, context):
        base = build_affinity("gaussian", context, sigma=0.5)
        composed = compose_kernels(base, [])
        np.testing.assert_array_equal(composed.values, base.values)
        assert composed.method is AffinityMethod.COMPOSED
        assert composed.params == {"sigma": 0.5, "base": "gaussian", "n_kernels": 0}

    def test_zero_kernel(self, context):
        base = build_affinity("gaussian", context, sigma=0.5)
        composed = compose_kernels(base, [np.zeros_like(base.values)])
        np.testing.assert_array_equal(composed.values, 0.0)

    def test_order_does_not_matter(self, context):
        base = build_affinity("gaussian", context, sigma=0.5)
        first = density_kernel(context.tnf)
        second = structural_kernel(context.zeta)
        np.testing.assert_allclose(
            compose_kernels(base, [first, second]).values,
            compose_kernels(base, [second, first]).values,
            rtol=1e-12,
        )

    @pytest.mark.parametrize(
        ("kernel", "message"),
        [
            (np.ones((2, 2)), "has shape"),
            (np.full((16, 16), np.nan), "NaN or Inf"),
            (-np.ones((16, 16)), "negative entries"),
            (np.triu(np.ones((16, 16))), "must be symmetric"),
        ],
    )
    def test_invalid_kernel(self, context, kernel, message):
        base = build_affinity("gaussian", context, sigma=0.5)
        with pytest.raises(ValueError, match=message):
            compose_kernels(base, [kernel])

    def test_structural_kernel_range(self, context):
        kernel = structural_kernel(context.zeta)
        assert np.all(kernel > 1.0)
        assert np.all(kernel <= 2.0)

    def test_composed_builder(self, context):
        composed = build_affinity("composed", context, sigma=0.5)
        assert composed.params["n_kernels"] == 3
        # the nearness term zeroes pairs without shared neighbors
        assert np.all((composed.values > 0) <= (context.shared_neighbors > 0))


class TestRegistry:
    def test_every_method_is_registered(self):
        discover_affinities()
        assert set(AFFINITY_REGISTRY) == set(AffinityMethod)

    def test_sigma_is_required(self, context):
        with pytest.raises(ValueError, match="requires sigma"):
            build_affinity("tnf2", context)

    def test_unknown_method(self, context):
        with pytest.raises(ValueError, match="is not a valid AffinityMethod"):
            build_affinity("laplace", context, sigma=1.0)

    def test_invariants_on_random_point_sets(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            dataset = LabeledDataset(points=rng.normal(size=(12, 3)), name="random")
            context = build_graph_context(dataset, epsilon_quantile=float(rng.uniform(0.1, 0.6)))
            sigma = float(rng.uniform(0.1, 3.0))

            for method in AffinityMethod:
                affinity = build_affinity(method, context, sigma=sigma, self_tuning_k=3)
                assert affinity.method is method
                assert affinity.n_points == 12

            beta = build_affinity("tnf1", context, sigma=sigma)
            amplified = build_affinity("tnf2", context, sigma=sigma)
            assert np.all(beta.values <= amplified.values)
            assert np.all(amplified.values <= 2 * beta.values)
            np.testing.assert_array_equal(common_neighbor_matrix(context.graph), context.shared_neighbors)
            np.testing.assert_array_equal(zeta_matrix(context.tnf.si), context.zeta)
