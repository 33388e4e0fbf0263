from typing import TYPE_CHECKING, Any

import numpy as np

from tnfspectral import AffinityMethod, register_affinity
from tnfspectral.affinities.gaussian import check_sigma
from tnfspectral.affinity_matrix import AffinityMatrix, finalize_affinity
from tnfspectral.neighborhood_graph import DistanceMatrix, NeighborhoodGraph, common_neighbor_matrix

if TYPE_CHECKING:
    from tnfspectral.pipeline import GraphContext


def cnn_affinity(
    distances: DistanceMatrix,
    graph: NeighborhoodGraph,
    sigma: float,
    shared: np.ndarray | None = None,
) -> AffinityMatrix:
    """
    Common-nearest-neighbor affinity: the Gaussian width is stretched by the number of shared neighbors.

    a_ij = exp(-d_ij^2 / (2 sigma^2 (CNN_ij + 1))) for i != j and 0 for i = j. With CNN_ij = 0 this is exactly
    the Gaussian kernel; a growing neighbor overlap pushes the affinity towards 1.

    Args:
        distances: Pairwise distances.
        graph: Epsilon-graph over the same points, defines the neighborhoods.
        sigma: Kernel width.
        shared: Optional precomputed common-neighbor counts (Adj @ Adj).

    Returns:
        The CNN affinity.

    Raises:
        ValueError: If the graph and the distances describe different point sets.

    """

    check_sigma(sigma)
    if graph.n_nodes != distances.n_points:
        raise ValueError(f"Graph has {graph.n_nodes} nodes but distances cover {distances.n_points} points.")

    shared = common_neighbor_matrix(graph) if shared is None else shared
    values = np.exp(-np.square(distances.values) / (2.0 * sigma**2 * (shared + 1.0)))
    return finalize_affinity(values, AffinityMethod.CNN, sigma=float(sigma), epsilon=graph.epsilon)


@register_affinity(AffinityMethod.CNN)
def build_cnn(context: "GraphContext", sigma: float, **_: Any) -> AffinityMatrix:
    """Registry entry: CNN affinity of the context."""
    return cnn_affinity(context.distances, context.graph, sigma, shared=context.shared_neighbors)
