from dataclasses import dataclass, fields
from enum import Enum

import numpy as np


class DatasetFamily(str, Enum):
    SHAPE = "shape"
    UCI = "uci"
    MNIST = "mnist"

    def __str__(self) -> str:
        """
        String representation of the dataset family.

        Returns:
            Dataset family name as a lower-case string.

        """
        return self.value


class Preprocessing(str, Enum):
    NONE = "none"
    Z_SCORE = "z-score"
    MIN_MAX = "min-max"

    def __str__(self) -> str:
        """
        String representation of the preprocessing method.

        Returns:
            Preprocessing method name as a lower-case string.

        """
        return self.value


@dataclass(kw_only=True, slots=True, frozen=True)
class LabeledDataset:
    points: np.ndarray
    """
    Feature matrix of shape (n, m). Units are dataset-specific: plane coordinates for shape datasets,
    raw or standardized measurements for UCI tables and pixel intensities in [0, 1] for MNIST.
    Row order is the point order used by every downstream index.
    """

    labels: np.ndarray | None = None
    """
    Optional ground truth of length n, remapped at load time to contiguous integers 0..k_true-1.
    """

    name: str
    """
    Short identifier used in logs, result tables and output file names (e.g. `jain`, `iris`, `mnist_08`).
    """

    def __post_init__(self) -> None:
        """Validates the dataset so that distances and metrics can rely on its invariants."""
        # --- Stage 1: Types ---
        self._check_field_types()

        # --- Stage 2: Values ---
        self._validate_points()
        self._validate_labels()

        # --- Stage 3: Locking ---
        self._make_numpy_arrays_readonly()

    @property
    def n_points(self) -> int:
        """Number of points n."""
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        """Number of features m."""
        return self.points.shape[1]

    @property
    def k_true(self) -> int | None:
        """Number of distinct ground-truth classes, or None when the dataset is unlabeled."""
        if self.labels is None:
            return None
        return int(self.labels.max()) + 1

    def _check_field_types(self) -> None:
        """Enforces ndarray/str field types."""  # noqa: DOC501
        if not isinstance(self.points, np.ndarray):
            raise TypeError(f"Field 'points' must be a numpy array, but received {type(self.points)}.")
        if self.labels is not None and not isinstance(self.labels, np.ndarray):
            raise TypeError(f"Field 'labels' must be a numpy array or None, but received {type(self.labels)}.")
        if not isinstance(self.name, str) or not self.name.strip():
            raise ValueError("Field 'name' cannot be an empty or whitespace-only string.")

    def _validate_points(self) -> None:
        """Ensures a non-empty finite (n, m) real matrix."""  # noqa: DOC501
        if self.points.ndim != 2:
            raise ValueError(f"Points must be a 2D array of shape (n, m), but got {self.points.ndim} dimensions.")
        if self.points.shape[0] < 1 or self.points.shape[1] < 1:
            raise ValueError(f"Points must contain at least one row and one column, got shape {self.points.shape}.")
        if not np.issubdtype(self.points.dtype, np.floating):
            raise TypeError(f"Points must be of a floating dtype, got `{self.points.dtype}`.")
        if not np.isfinite(self.points).all():
            bad_row = int(np.flatnonzero(~np.isfinite(self.points).all(axis=1))[0])
            raise ValueError(f"Points must be finite, but row {bad_row} contains NaN or Inf.")

    def _validate_labels(self) -> None:
        """Ensures labels are 0-based contiguous integers with every class present."""  # noqa: DOC501
        if self.labels is None:
            return

        if self.labels.ndim != 1 or self.labels.shape[0] != self.points.shape[0]:
            raise ValueError(
                f"Labels must be a vector of length {self.points.shape[0]}, but got shape {self.labels.shape}."
            )
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise TypeError(f"Labels must be of an integer dtype, got `{self.labels.dtype}`.")

        present = np.unique(self.labels)
        if not np.array_equal(present, np.arange(present.size)):
            raise ValueError(f"Labels must form a contiguous 0-based range, but found values {present.tolist()}.")

    def _make_numpy_arrays_readonly(self) -> None:
        """Sets the WRITEABLE flag to False for all ndarray fields."""
        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
