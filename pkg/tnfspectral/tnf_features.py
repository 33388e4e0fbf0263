from dataclasses import dataclass, fields
from enum import Enum

import numpy as np
from loguru import logger
from scipy.spatial.distance import pdist, squareform

from tnfspectral.configs.config_loader import config
from tnfspectral.neighborhood_graph import NeighborhoodGraph, common_neighbor_matrix


class PhiMode(str, Enum):
    # number of neighbors that are connected to another neighbor
    NODES = "nodes"
    # number of edges among the neighbors (triangles through the node)
    EDGES = "edges"

    def __str__(self) -> str:
        """
        String representation of the clustering-coefficient mode.

        Returns:
            Mode name as a lower-case string.

        """
        return self.value


@dataclass(kw_only=True, slots=True, frozen=True)
class TnfProfile:
    degree: np.ndarray
    """Node degree d: size of the first neighborhood of every node. Also the seed of the Summation Index."""

    phi: np.ndarray
    """
    Clustering coefficient phi as a count (not the normalized ratio). Its meaning depends on `phi_mode`:
    neighbors having another neighbor among the node's neighborhood, or edges inside the neighborhood.
    """

    si: np.ndarray
    """Summation Index vectors, shape (n, depth): column c holds SI_{c+1} = Adj^{c+2} @ 1."""

    phi_mode: PhiMode = PhiMode.NODES

    def __post_init__(self) -> None:
        """Validates shapes and signs, then locks the arrays."""  # noqa: DOC501
        n = self.degree.shape[0]
        if self.phi.shape != (n,):
            raise ValueError(f"phi must have shape ({n},), got {self.phi.shape}.")
        if self.si.ndim != 2 or self.si.shape[0] != n:
            raise ValueError(f"si must have shape ({n}, depth), got {self.si.shape}.")
        if np.any(self.degree < 0) or np.any(self.phi < 0) or np.any(self.si < 0):
            raise ValueError("Topological node features must be nonnegative.")

        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        """Number of nodes the features describe."""
        return self.degree.shape[0]


def degrees(graph: NeighborhoodGraph) -> np.ndarray:
    """
    Node degree: the number of nodes in the first neighborhood.

    Args:
        graph: The epsilon-graph.

    Returns:
        int64 vector of length n.

    """

    return graph.adjacency.sum(axis=1, dtype=np.int64)


def clustering_counts(graph: NeighborhoodGraph, phi_mode: PhiMode | str = PhiMode.NODES) -> np.ndarray:
    """
    Local density as a count over the first neighborhood of every node.

    - `nodes`: number of neighbors u of p that have at least one other neighbor of p as their own neighbor.
      u qualifies iff u and p share a common neighbor, i.e. (Adj @ Adj)[p, u] > 0.
    - `edges`: number of edges among the neighbors of p, i.e. the triangles through p, diag(Adj^3) / 2.

    Args:
        graph: The epsilon-graph.
        phi_mode: Which count to compute.

    Returns:
        int64 vector of length n, never larger than the degree in `nodes` mode.

    """

    phi_mode = PhiMode(phi_mode)
    adjacency = graph.adjacency
    shared = common_neighbor_matrix(graph)

    if phi_mode is PhiMode.NODES:
        return (adjacency & (shared > 0)).sum(axis=1, dtype=np.int64)

    return (adjacency * shared).sum(axis=1, dtype=np.int64) // 2


def summation_index(graph: NeighborhoodGraph, depth: int = 3) -> np.ndarray:
    """
    Propagates the degree through the graph: SI_0 = d, SI_i(v) = sum of SI_{i-1}(u) over neighbors u of v.

    Values are exact int64. Since SI_i(v) <= max_degree * max(SI_{i-1}), each step is checked against that
    bound before multiplying.

    Args:
        graph: The epsilon-graph.
        depth: Number of iterations to return (SI_1 .. SI_depth).

    Returns:
        int64 matrix of shape (n, depth).

    Raises:
        ValueError: If depth < 1.
        OverflowError: If an iteration could exceed the int64 range.

    """

    if depth < 1:
        raise ValueError(f"depth must be at least 1, but got {depth}.")

    adjacency = graph.adjacency.astype(np.int64)
    current = degrees(graph)
    max_degree = int(current.max(initial=0))
    int64_max = np.iinfo(np.int64).max

    columns = []
    for iteration in range(1, depth + 1):
        if max_degree and int(current.max(initial=0)) > int64_max // max_degree:
            raise OverflowError(f"Summation Index iteration {iteration} would overflow int64.")
        current = adjacency @ current
        columns.append(current)

    return np.stack(columns, axis=1)


def si_distance(si: np.ndarray, i: int, j: int) -> float:
    """
    Structural dissimilarity zeta: Euclidean norm of the difference between two SI vectors.

    Args:
        si: Summation Index matrix of shape (n, depth).
        i: First node index.
        j: Second node index.

    Returns:
        The distance between rows i and j.

    Raises:
        IndexError: If an index is out of range.

    """

    n = si.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"Node indices ({i}, {j}) are out of range for {n} nodes.")

    return float(np.linalg.norm(si[i].astype(np.float64) - si[j].astype(np.float64)))


def zeta_matrix(si: np.ndarray) -> np.ndarray:
    """
    All pairwise structural dissimilarities at once.

    Args:
        si: Summation Index matrix of shape (n, depth).

    Returns:
        Symmetric float64 matrix of shape (n, n) with a zero diagonal.

    """

    if si.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(si.astype(np.float64), metric="euclidean"))


def compute_tnf_profile(
    graph: NeighborhoodGraph,
    phi_mode: PhiMode | str | None = None,
    depth: int | None = None,
) -> TnfProfile:
    """
    Computes all topological node features of the graph.

    Args:
        graph: The epsilon-graph.
        phi_mode: Clustering-coefficient mode; defaults to `tnf.phi_mode` from the config.
        depth: Summation Index depth; defaults to `tnf.si_depth` from the config.

    Returns:
        The TnfProfile with degree, phi and SI vectors.

    Raises:
        ValueError: If depth < 1.

    """

    phi_mode = PhiMode(config.tnf.phi_mode if phi_mode is None else phi_mode)
    depth = config.tnf.si_depth if depth is None else depth

    profile = TnfProfile(
        degree=degrees(graph),
        phi=clustering_counts(graph, phi_mode),
        si=summation_index(graph, depth),
        phi_mode=phi_mode,
    )
    logger.debug(
        f"TNF profile: mean degree {profile.degree.mean():.2f}, mean phi ({phi_mode}) {profile.phi.mean():.2f}"
    )
    return profile
