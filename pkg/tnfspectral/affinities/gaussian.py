from typing import TYPE_CHECKING, Any

import numpy as np

from tnfspectral import AffinityMethod, register_affinity
from tnfspectral.affinity_matrix import AffinityMatrix, finalize_affinity
from tnfspectral.neighborhood_graph import DistanceMatrix

if TYPE_CHECKING:
    from tnfspectral.pipeline import GraphContext


def check_sigma(sigma: float) -> None:
    """Raises ValueError unless sigma is a positive number."""  # noqa: DOC501
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, but got {sigma}.")


def gaussian_affinity(distances: DistanceMatrix, sigma: float) -> AffinityMatrix:
    """
    Standard Gaussian kernel: exp(-d^2 / (2 sigma^2)) for i != j, zero on the diagonal.

    Args:
        distances: Pairwise distances.
        sigma: Kernel width.

    Returns:
        The Gaussian affinity.

    """

    check_sigma(sigma)
    values = np.exp(-np.square(distances.values) / (2.0 * sigma**2))
    return finalize_affinity(values, AffinityMethod.GAUSSIAN, sigma=float(sigma))


@register_affinity(AffinityMethod.GAUSSIAN)
def build_gaussian(context: "GraphContext", sigma: float, **_: Any) -> AffinityMatrix:
    """Registry entry: Gaussian affinity of the context."""
    return gaussian_affinity(context.distances, sigma)
