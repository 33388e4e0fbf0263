from dataclasses import dataclass, fields

import numpy as np
from loguru import logger
from scipy.spatial.distance import pdist, squareform

from tnfspectral.datasets import LabeledDataset


@dataclass(kw_only=True, slots=True, frozen=True)
class DistanceMatrix:
    values: np.ndarray
    """
    Symmetric (n, n) matrix of pairwise distances in feature-space units, with a zero diagonal.
    Holds the tau_ij distances used by every kernel.
    """

    metric: str = "euclidean"

    def __post_init__(self) -> None:
        """Validates that the matrix is a proper distance matrix and locks it."""  # noqa: DOC501
        values = self.values
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"Distance matrix must be square, got shape {values.shape}.")
        if not np.isfinite(values).all():
            raise ValueError("Distance matrix contains NaN or Inf.")
        if np.any(values < 0):
            raise ValueError("Distance matrix contains negative entries.")
        if np.any(np.diagonal(values) != 0):
            raise ValueError("Distance matrix must have a zero diagonal.")
        if not np.array_equal(values, values.T):
            raise ValueError("Distance matrix must be exactly symmetric.")

        values.setflags(write=False)

    @property
    def n_points(self) -> int:
        """Number of points covered by the matrix."""
        return self.values.shape[0]


@dataclass(kw_only=True, slots=True, frozen=True)
class NeighborhoodGraph:
    adjacency: np.ndarray
    """
    Boolean (n, n) adjacency of the undirected, unweighted epsilon-graph: entry (i, j) is True iff
    d(i, j) <= epsilon and i != j. Row i lists the first neighborhood of node i.
    """

    epsilon: float
    """Connection radius, in the units of the distance matrix."""

    distances: DistanceMatrix
    """The distance matrix the graph was built from."""

    def __post_init__(self) -> None:
        """Validates symmetry and the absence of self-loops, then locks the arrays."""  # noqa: DOC501
        adjacency = self.adjacency
        if adjacency.dtype != np.bool_:
            raise TypeError(f"Adjacency must be boolean, got `{adjacency.dtype}`.")
        if adjacency.shape != self.distances.values.shape:
            raise ValueError(
                f"Adjacency shape {adjacency.shape} does not match distances shape {self.distances.values.shape}."
            )
        if np.any(np.diagonal(adjacency)):
            raise ValueError("Adjacency must not contain self-loops.")
        if not np.array_equal(adjacency, adjacency.T):
            raise ValueError("Adjacency must be symmetric.")

        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        """Number of graph nodes."""
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return int(np.count_nonzero(self.adjacency)) // 2

    @property
    def isolated_nodes(self) -> np.ndarray:
        """Indices of nodes with degree 0."""
        return np.flatnonzero(~self.adjacency.any(axis=1))


def pairwise_distances(dataset: LabeledDataset) -> DistanceMatrix:
    """
    Computes Euclidean distances between all rows of the dataset.

    Each unordered pair is computed once (condensed form) and mirrored, so the result is exactly symmetric.

    Args:
        dataset: The dataset whose points are compared.

    Returns:
        DistanceMatrix of shape (n, n).

    """

    if dataset.n_points == 1:
        return DistanceMatrix(values=np.zeros((1, 1)))

    return DistanceMatrix(values=squareform(pdist(dataset.points, metric="euclidean")))


def build_epsilon_graph(distances: DistanceMatrix, epsilon: float) -> NeighborhoodGraph:
    """
    Connects every pair of points that lie at a distance less than or equal to `epsilon`.

    Nodes left without neighbors are allowed; they are reported with a warning because they end up with
    zero affinity rows for the graph-based kernels.

    Args:
        distances: Pairwise distances.
        epsilon: Connection radius, must be positive.

    Returns:
        The epsilon-neighborhood graph.

    Raises:
        ValueError: If epsilon is not positive.

    """

    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, but got {epsilon}.")

    adjacency = distances.values <= epsilon
    np.fill_diagonal(adjacency, False)

    graph = NeighborhoodGraph(adjacency=adjacency, epsilon=float(epsilon), distances=distances)

    isolated = graph.isolated_nodes
    if isolated.size:
        logger.warning(f"epsilon={epsilon:.6g} leaves {isolated.size} isolated node(s), e.g. {isolated[:5].tolist()}")
    logger.debug(f"epsilon-graph with epsilon={epsilon:.6g}: {graph.n_edges} edges over {graph.n_nodes} nodes")

    return graph


def _check_node(graph: NeighborhoodGraph, i: int) -> None:
    if not 0 <= i < graph.n_nodes:
        raise IndexError(f"Node index {i} is out of range for a graph with {graph.n_nodes} nodes.")


def neighborhood(graph: NeighborhoodGraph, i: int) -> set[int]:
    """
    Returns the first neighborhood of node `i`: all nodes directly connected to it (never `i` itself).

    Args:
        graph: The epsilon-graph.
        i: Node index.

    Returns:
        Set of neighbor indices.

    """

    _check_node(graph, i)
    return set(np.flatnonzero(graph.adjacency[i]).tolist())


def common_neighbors(graph: NeighborhoodGraph, i: int, j: int) -> int:
    """
    Counts the nodes adjacent to both `i` and `j`.

    Args:
        graph: The epsilon-graph.
        i: First node index.
        j: Second node index, different from `i`.

    Returns:
        Size of the intersection of both first neighborhoods.

    Raises:
        ValueError: If `i == j`.

    """

    _check_node(graph, i)
    _check_node(graph, j)
    if i == j:
        raise ValueError(f"Common neighbors are defined for distinct nodes, got i = j = {i}.")

    return int(np.count_nonzero(graph.adjacency[i] & graph.adjacency[j]))


def common_neighbor_matrix(graph: NeighborhoodGraph) -> np.ndarray:
    """
    Counts common neighbors for all pairs at once.

    Without self-loops, entry (i, j) of Adj @ Adj is exactly the number of shared neighbors of i and j.
    The diagonal holds the degrees.

    Args:
        graph: The epsilon-graph.

    Returns:
        Symmetric int64 matrix of shape (n, n), the counts are exact.

    """

    # float64 matmul goes through BLAS; counts are <= n and therefore exact
    adjacency = graph.adjacency.astype(np.float64)
    return (adjacency @ adjacency).astype(np.int64)


def suggest_epsilon(distances: DistanceMatrix, quantile: float) -> float:
    """
    Picks epsilon as a quantile of the off-diagonal pairwise distances, which makes it scale-free.

    Args:
        distances: Pairwise distances.
        quantile: Fraction in (0, 1]; linear interpolation between order statistics.

    Returns:
        The distance at the requested quantile.

    Raises:
        ValueError: If the quantile is outside (0, 1] or fewer than two points are available.

    """

    if not 0 < quantile <= 1:
        raise ValueError(f"quantile must be in (0, 1], but got {quantile}.")
    if distances.n_points < 2:
        raise ValueError("At least two points are needed to suggest epsilon.")

    upper = distances.values[np.triu_indices(distances.n_points, k=1)]
    return float(np.quantile(upper, quantile, method="linear"))
