from dataclasses import dataclass, field
from typing import Any

import numpy as np

from tnfspectral import AffinityMethod


@dataclass(kw_only=True, slots=True, frozen=True)
class AffinityMatrix:
    values: np.ndarray
    """Symmetric, nonnegative, finite (n, n) similarity matrix with a zero diagonal."""

    method: AffinityMethod
    """Kernel that produced the matrix."""

    params: dict[str, Any] = field(default_factory=dict)
    """Parameters echoed for provenance (sigma, epsilon, K, ...)."""

    def __post_init__(self) -> None:
        """Validates the affinity invariants required by the normalized Laplacian and locks the array."""  # noqa: DOC501
        if not isinstance(self.method, AffinityMethod):
            raise TypeError(f"Field 'method' must be an AffinityMethod, but received {type(self.method)}.")

        values = self.values
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"Affinity must be a square matrix, got shape {values.shape}.")
        if not np.isfinite(values).all():
            raise ValueError(f"`{self.method}` affinity contains NaN or Inf.")
        if np.any(values < 0):
            raise ValueError(f"`{self.method}` affinity contains negative entries.")
        if np.any(np.diagonal(values) != 0):
            raise ValueError(f"`{self.method}` affinity must have a zero diagonal.")
        if not np.array_equal(values, values.T):
            raise ValueError(f"`{self.method}` affinity must be exactly symmetric.")

        values.setflags(write=False)

    @property
    def n_points(self) -> int:
        """Number of points n."""
        return self.values.shape[0]


def finalize_affinity(values: np.ndarray, method: AffinityMethod, **params: Any) -> AffinityMatrix:
    """
    Wraps raw kernel values into an AffinityMatrix.

    Only the strict upper triangle is kept and mirrored, so the result is exactly symmetric and its diagonal
    is zero (the i = j case of every kernel).

    Args:
        values: Raw (n, n) kernel values.
        method: Kernel that produced the values.
        **params: Parameters echoed for provenance.

    Returns:
        The validated AffinityMatrix.

    """

    upper = np.triu(values, k=1)
    return AffinityMatrix(values=upper + upper.T, method=method, params=params)
