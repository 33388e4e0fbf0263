from collections.abc import Sequence
from typing import TYPE_CHECKING, Any

import numpy as np

from tnfspectral import AffinityMethod, register_affinity
from tnfspectral.affinities.gaussian import gaussian_affinity
from tnfspectral.affinities.topological import log_base_divisor
from tnfspectral.affinity_matrix import AffinityMatrix, finalize_affinity
from tnfspectral.configs.config_loader import config
from tnfspectral.tnf_features import TnfProfile

if TYPE_CHECKING:
    from tnfspectral.pipeline import GraphContext


def compose_kernels(base: AffinityMatrix, kernels: Sequence[np.ndarray]) -> AffinityMatrix:
    """
    Multiplies a base affinity elementwise by every kernel in `kernels`.

    Kernels are free-form (n, n) weights, typically a density term, a spatial-nearness term and a structural
    similarity term. The result keeps the provenance of `base` and records the number of kernels.

    Args:
        base: Affinity to be reweighted.
        kernels: Nonnegative, finite, symmetric matrices of the same shape as `base`.

    Returns:
        The composed affinity.

    Raises:
        ValueError: If a kernel has the wrong shape, negative or non-finite entries, or is not symmetric.

    """

    values = base.values.copy()
    for idx, kernel in enumerate(kernels):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.shape != values.shape:
            raise ValueError(f"Kernel {idx} has shape {kernel.shape}, expected {values.shape}.")
        if not np.isfinite(kernel).all():
            raise ValueError(f"Kernel {idx} contains NaN or Inf.")
        if np.any(kernel < 0):
            raise ValueError(f"Kernel {idx} contains negative entries.")
        if not np.array_equal(kernel, kernel.T):
            raise ValueError(f"Kernel {idx} must be symmetric.")
        values *= kernel

    return finalize_affinity(values, AffinityMethod.COMPOSED, **base.params, base=str(base.method), n_kernels=len(kernels))


def density_kernel(tnf: TnfProfile) -> np.ndarray:
    """exp(-|phi_i - phi_j|): close to 1 for nodes of similar local density."""
    phi = tnf.phi.astype(np.float64)
    return np.exp(-np.abs(phi[:, None] - phi[None, :]))


def nearness_kernel(shared: np.ndarray) -> np.ndarray:
    """Common-neighbor count as a weight; zero for pairs without shared neighbors."""
    return shared.astype(np.float64)


def structural_kernel(zeta: np.ndarray, log_base: str | float = "e") -> np.ndarray:
    """1 + 1 / (1 + log(1 + zeta)), in (1, 2]."""
    return 1.0 + 1.0 / (1.0 + np.log1p(zeta) / log_base_divisor(log_base))


@register_affinity(AffinityMethod.COMPOSED)
def build_composed(context: "GraphContext", sigma: float, **params: Any) -> AffinityMatrix:
    """Registry entry: Gaussian affinity reweighted by the density, nearness and structural kernels."""
    # separable counterpart of TNF2: Gaussian * density * nearness * structure
    log_base = params.get("log_base", config.affinity.log_base)
    kernels = [
        density_kernel(context.tnf),
        nearness_kernel(context.shared_neighbors),
        structural_kernel(context.zeta, log_base),
    ]
    return compose_kernels(gaussian_affinity(context.distances, sigma), kernels)
