from typing import TYPE_CHECKING, Any

import numpy as np
from loguru import logger

from tnfspectral import AffinityMethod, register_affinity
from tnfspectral.affinity_matrix import AffinityMatrix, finalize_affinity
from tnfspectral.configs.config_loader import config
from tnfspectral.neighborhood_graph import DistanceMatrix

if TYPE_CHECKING:
    from tnfspectral.pipeline import GraphContext


def local_scales(distances: DistanceMatrix, K: int) -> np.ndarray:  # noqa: N803
    """
    Local scale of every point: the distance to its K-th nearest other point.

    Args:
        distances: Pairwise distances.
        K: Neighbor rank, 1 <= K < n.

    Returns:
        Vector of length n.

    Raises:
        ValueError: If K is out of range or a local scale is zero.

    """

    n = distances.n_points
    if not 1 <= K < n:
        raise ValueError(f"K must satisfy 1 <= K < n = {n}, but got {K}.")

    # column 0 of every sorted row is a zero: the point itself (or an exact duplicate)
    scales = np.partition(distances.values, K, axis=1)[:, K]

    zero = np.flatnonzero(scales == 0)
    if zero.size:
        raise ValueError(
            f"Zero local scale at point {int(zero[0])}: it has at least {K} exact duplicate(s); increase K."
        )
    return scales


def self_tuning_affinity(distances: DistanceMatrix, K: int) -> AffinityMatrix:  # noqa: N803
    """
    Self-tuning affinity with local scaling: exp(-d_ij^2 / (sigma_i sigma_j)), zero on the diagonal.

    Args:
        distances: Pairwise distances.
        K: Rank of the neighbor that defines each local scale sigma_i.

    Returns:
        The self-tuning affinity.

    """

    scales = local_scales(distances, K)
    values = np.exp(-np.square(distances.values) / np.outer(scales, scales))
    return finalize_affinity(values, AffinityMethod.SELF_TUNING, K=int(K))


@register_affinity(AffinityMethod.SELF_TUNING)
def build_self_tuning(context: "GraphContext", sigma: float | None = None, **params: Any) -> AffinityMatrix:
    """Registry entry: self-tuning affinity with K from `self_tuning_k` or the config."""
    # the global sigma does not enter this kernel
    n_neighbors = params.get("self_tuning_k") or config.affinity.self_tuning_k
    if n_neighbors >= context.distances.n_points:
        n_neighbors = context.distances.n_points - 1
        logger.warning(f"Self-tuning K clipped to n - 1 = {n_neighbors}")
    return self_tuning_affinity(context.distances, n_neighbors)
