from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb

from tnfspectral.configs.config_loader import config


class NmiAverage(str, Enum):
    GEOMETRIC = "geometric"
    ARITHMETIC = "arithmetic"

    def __str__(self) -> str:
        """
        String representation of the NMI normalization.

        Returns:
            Normalization name as a lower-case string.

        """
        return self.value


@dataclass(kw_only=True, slots=True, frozen=True)
class ContingencyTable:
    counts: np.ndarray
    """(k_pred, k_true) table: entry (a, b) counts points predicted in cluster a that belong to class b."""

    n: int

    def __post_init__(self) -> None:
        """Validates that counts are nonnegative and add up to n."""  # noqa: DOC501
        if np.any(self.counts < 0):
            raise ValueError("Contingency counts must be nonnegative.")
        if int(self.counts.sum()) != self.n:
            raise ValueError(f"Contingency counts add up to {int(self.counts.sum())}, expected {self.n}.")
        self.counts.setflags(write=False)


def _check_labels(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.ndim != 1 or truth.ndim != 1:
        raise ValueError("Label vectors must be one-dimensional.")
    if pred.shape != truth.shape:
        raise ValueError(f"Label vectors differ in length: {pred.size} != {truth.size}.")
    return pred, truth


def contingency_table(pred: np.ndarray, truth: np.ndarray) -> ContingencyTable:
    """
    Cross-tabulates two labelings. Only label values that occur are kept, so ids need not be contiguous.

    Args:
        pred: Predicted labels.
        truth: Ground-truth labels.

    Returns:
        The ContingencyTable.

    Raises:
        ValueError: If the vectors are not 1D or differ in length.

    """

    pred, truth = _check_labels(pred, truth)
    _, pred_idx = np.unique(pred, return_inverse=True)
    _, truth_idx = np.unique(truth, return_inverse=True)

    counts = np.zeros((pred_idx.max(initial=-1) + 1, truth_idx.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(counts, (pred_idx, truth_idx), 1)
    return ContingencyTable(counts=counts, n=int(pred.size))


def adjusted_rand_index(pred: np.ndarray, truth: np.ndarray) -> float:
    """
    Adjusted Rand Index: pair-counting agreement corrected for chance.

    ARI = (Index - E[Index]) / (Max - E[Index]). When Max = E[Index] (both partitions trivial), the score is
    1 for identical partitions and 0 otherwise.

    Args:
        pred: Predicted labels.
        truth: Ground-truth labels.

    Returns:
        ARI, at most 1 and possibly negative.

    Raises:
        ValueError: If the vectors differ in length or contain fewer than two points.

    """

    table = contingency_table(pred, truth)
    if table.n < 2:
        raise ValueError(f"ARI needs at least two points, got {table.n}.")

    index = comb(table.counts, 2).sum()
    sum_pred = comb(table.counts.sum(axis=1), 2).sum()
    sum_truth = comb(table.counts.sum(axis=0), 2).sum()
    expected = sum_pred * sum_truth / comb(table.n, 2)
    maximum = (sum_pred + sum_truth) / 2.0

    if maximum == expected:
        return 1.0 if _same_partition(table) else 0.0
    return float((index - expected) / (maximum - expected))


def _same_partition(table: ContingencyTable) -> bool:
    """Two labelings are equal up to relabeling iff every row and column has exactly one nonzero cell."""
    nonzero = table.counts > 0
    return bool(np.all(nonzero.sum(axis=0) == 1) and np.all(nonzero.sum(axis=1) == 1))


def _entropy(counts: np.ndarray, n: int) -> float:
    probabilities = counts[counts > 0] / n
    return float(-(probabilities * np.log(probabilities)).sum())


def normalized_mutual_info(pred: np.ndarray, truth: np.ndarray, average: NmiAverage | str | None = None) -> float:
    """
    Normalized Mutual Information.

    NMI = I(pred; truth) / sqrt(H(pred) H(truth)) with `geometric`, or I / ((H(pred) + H(truth)) / 2) with
    `arithmetic`. Identical partitions score 1; otherwise a zero entropy on either side scores 0.

    Args:
        pred: Predicted labels.
        truth: Ground-truth labels.
        average: Normalization; defaults to `metrics.nmi_average`.

    Returns:
        NMI in [0, 1].

    Raises:
        ValueError: If the vectors are empty, not 1D or differ in length.

    """

    average = NmiAverage(average or config.metrics.nmi_average)
    table = contingency_table(pred, truth)
    if table.n == 0:
        raise ValueError("NMI is undefined for empty label vectors.")

    if _same_partition(table):
        return 1.0

    h_pred = _entropy(table.counts.sum(axis=1), table.n)
    h_truth = _entropy(table.counts.sum(axis=0), table.n)
    if h_pred == 0 or h_truth == 0:
        return 0.0

    joint = table.counts / table.n
    outer = np.outer(table.counts.sum(axis=1), table.counts.sum(axis=0)) / table.n**2
    nonzero = joint > 0
    mutual_info = float((joint[nonzero] * np.log(joint[nonzero] / outer[nonzero])).sum())

    if average is NmiAverage.GEOMETRIC:
        normalizer = np.sqrt(h_pred * h_truth)
    else:
        normalizer = (h_pred + h_truth) / 2.0

    # rounding can push MI marginally outside [0, normalizer]
    return float(np.clip(mutual_info / normalizer, 0.0, 1.0))


def clustering_error(pred: np.ndarray, truth: np.ndarray) -> float:
    """
    Clustering Error: share of points outside the best one-to-one matching of clusters to classes.

    The matching maximizes the matched count over the rectangular contingency table (Hungarian method);
    surplus clusters on either side stay unmatched.

    Args:
        pred: Predicted labels.
        truth: Ground-truth labels.

    Returns:
        CE in [0, 1].

    Raises:
        ValueError: If the vectors are empty, not 1D or differ in length.

    """

    table = contingency_table(pred, truth)
    if table.n == 0:
        raise ValueError("Clustering error is undefined for empty label vectors.")

    rows, cols = linear_sum_assignment(table.counts, maximize=True)
    matched = int(table.counts[rows, cols].sum())
    return 1.0 - matched / table.n
