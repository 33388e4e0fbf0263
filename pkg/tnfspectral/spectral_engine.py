from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np
from loguru import logger
from numba import njit
from scipy import linalg

from tnfspectral import AffinityMethod
from tnfspectral.affinity_matrix import AffinityMatrix
from tnfspectral.configs.config_loader import config
from tnfspectral.neighborhood_graph import DistanceMatrix

SYMMETRY_TOLERANCE = 1e-10
ZERO_ROW_TOLERANCE = 1e-12


# ------------------------------------------- Data Types --------------------------------------------


def _lock_arrays(instance: Any) -> None:
    for f in fields(instance):
        value = getattr(instance, f.name)
        if isinstance(value, np.ndarray):
            value.setflags(write=False)


@dataclass(kw_only=True, slots=True, frozen=True)
class NormalizedLaplacian:
    matrix: np.ndarray
    """L = D^(-1/2) A D^(-1/2), exactly symmetric."""

    degree: np.ndarray
    """Row sums of the affinity."""

    zero_degree: np.ndarray
    """Indices of points whose affinity row sums to zero; their rows in L are all zero."""

    def __post_init__(self) -> None:
        """Locks the arrays."""
        _lock_arrays(self)


@dataclass(kw_only=True, slots=True, frozen=True)
class SpectralEmbedding:
    rows: np.ndarray
    """(n, k) embedding, every row with unit Euclidean norm except the flagged zero rows."""

    eigenvalues: np.ndarray
    """The k largest eigenvalues, in descending order."""

    eigenvectors: np.ndarray
    """(n, k) unit-norm eigenvectors before row normalization, largest-magnitude entry positive."""

    zero_rows: np.ndarray
    """Indices of rows that were zero before normalization and are left as zero."""

    def __post_init__(self) -> None:
        """Locks the arrays."""
        _lock_arrays(self)


@dataclass(kw_only=True, slots=True, frozen=True)
class KMeansResult:
    labels: np.ndarray
    objective: float
    """Sum of squared distances of every row to the centroid of its cluster."""

    empty_clusters: np.ndarray
    """Cluster ids that ended up without any point."""

    best_restart: int
    history: np.ndarray
    """Assignment objective of every Lloyd iteration of the winning restart."""

    def __post_init__(self) -> None:
        """Locks the arrays."""
        _lock_arrays(self)


@dataclass(kw_only=True, slots=True, frozen=True)
class ClusteringResult:
    labels: np.ndarray
    """Predicted cluster of every point, in 0..k-1."""

    k: int
    kmeans_objective: float
    seed: int
    restarts_used: int
    method: AffinityMethod
    params: dict[str, Any] = field(default_factory=dict)
    eigenvalues: np.ndarray
    zero_degree: np.ndarray
    """Points with a zero affinity row."""

    reassigned: np.ndarray
    """Zero-degree points relabeled after their nearest non-degenerate point."""

    empty_clusters: np.ndarray

    def __post_init__(self) -> None:
        """Checks that labels are valid cluster ids and locks the arrays."""  # noqa: DOC501
        if self.labels.size and not (self.labels.min() >= 0 and self.labels.max() < self.k):
            raise ValueError(f"Labels must lie in [0, {self.k}).")
        _lock_arrays(self)

    @property
    def has_empty_cluster(self) -> bool:
        """Whether k-means left at least one cluster without points."""
        return bool(self.empty_clusters.size)


# -------------------------------------------- Laplacian --------------------------------------------


def normalized_laplacian(affinity: AffinityMatrix) -> NormalizedLaplacian:
    """
    Builds the NJW normalized affinity L = D^(-1/2) A D^(-1/2).

    Points with zero degree cannot be normalized; their rows and columns stay zero and they are reported
    instead of producing NaNs.

    Args:
        affinity: Validated affinity matrix.

    Returns:
        The normalized Laplacian with degrees and the zero-degree indices.

    """

    values = affinity.values
    degree = values.sum(axis=1)
    zero_degree = np.flatnonzero(degree == 0)
    if zero_degree.size:
        logger.warning(f"{zero_degree.size} point(s) have zero affinity degree, e.g. {zero_degree[:5].tolist()}")

    inv_sqrt = np.zeros_like(degree)
    np.divide(1.0, np.sqrt(degree), out=inv_sqrt, where=degree > 0)

    matrix = inv_sqrt[:, None] * values * inv_sqrt[None, :]
    # the products above are not associative in floating point
    matrix = (matrix + matrix.T) / 2.0

    return NormalizedLaplacian(matrix=matrix, degree=degree, zero_degree=zero_degree)


# ------------------------------------------- Eigenvectors -------------------------------------------


def top_k_eigenvectors(laplacian: np.ndarray, k: int) -> SpectralEmbedding:
    """
    Takes the k eigenvectors of largest eigenvalue and renormalizes each row to unit length.

    A full dense symmetric decomposition is used. Every eigenvector is flipped so that its largest-magnitude
    entry is positive, which makes the embedding reproducible across LAPACK builds.

    Args:
        laplacian: Symmetric (n, n) matrix.
        k: Number of eigenvectors, 1 <= k <= n.

    Returns:
        The spectral embedding.

    Raises:
        ValueError: If k is out of range or the matrix is not symmetric.
        RuntimeError: If the eigensolver does not converge.

    """

    if laplacian.ndim != 2 or laplacian.shape[0] != laplacian.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {laplacian.shape}.")
    n = laplacian.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n = {n}, but got {k}.")
    asymmetry = float(np.abs(laplacian - laplacian.T).max(initial=0.0))
    if asymmetry > SYMMETRY_TOLERANCE:
        raise ValueError(f"Matrix is not symmetric: max |L - L^T| = {asymmetry:.3g}.")

    try:
        eigenvalues, eigenvectors = linalg.eigh(laplacian, subset_by_index=[n - k, n - 1])
    except linalg.LinAlgError as err:
        raise RuntimeError(f"Eigendecomposition failed: {err}") from err

    # ascending -> descending
    eigenvalues, eigenvectors = eigenvalues[::-1].copy(), eigenvectors[:, ::-1].copy()

    pivots = np.abs(eigenvectors).argmax(axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(k)])
    signs[signs == 0] = 1.0
    eigenvectors *= signs

    norms = np.linalg.norm(eigenvectors, axis=1)
    zero_rows = np.flatnonzero(norms <= ZERO_ROW_TOLERANCE)
    if zero_rows.size:
        logger.warning(f"{zero_rows.size} embedding row(s) are zero and stay unnormalized")

    rows = np.zeros_like(eigenvectors)
    nonzero = norms > ZERO_ROW_TOLERANCE
    rows[nonzero] = eigenvectors[nonzero] / norms[nonzero, None]

    return SpectralEmbedding(rows=rows, eigenvalues=eigenvalues, eigenvectors=eigenvectors, zero_rows=zero_rows)


# --------------------------------------------- K-Means ---------------------------------------------


@njit(nogil=True)
def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Lloyd iterations until the assignment stops changing or `max_iter` is reached.

    Centers are updated in place. A center that loses all its points keeps its previous position.

    Args:
        points: (n, dim) contiguous float64 array.
        centers: (k, dim) initial centers, float64.
        max_iter: Maximum number of assignment steps.

    Returns:
        (labels, history): final assignment and the objective of every assignment step.

    """

    n, dim = points.shape
    k = centers.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    history = np.empty(max_iter, dtype=np.float64)
    n_steps = 0

    for _ in range(max_iter):
        # assignment step
        changed = False
        objective = 0.0
        for i in range(n):
            best, best_dist = 0, np.inf
            for c in range(k):
                dist = 0.0
                for j in range(dim):
                    diff = points[i, j] - centers[c, j]
                    dist += diff * diff
                if dist < best_dist:
                    best, best_dist = c, dist
            if labels[i] != best:
                labels[i] = best
                changed = True
            objective += best_dist
        history[n_steps] = objective
        n_steps += 1

        if not changed:
            break

        # update step
        sums = np.zeros((k, dim), dtype=np.float64)
        counts = np.zeros(k, dtype=np.int64)
        for i in range(n):
            counts[labels[i]] += 1
            for j in range(dim):
                sums[labels[i], j] += points[i, j]
        for c in range(k):
            if counts[c] > 0:
                for j in range(dim):
                    centers[c, j] = sums[c, j] / counts[c]

    return labels, history[:n_steps]


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: every next center is drawn with probability proportional to D(x)^2."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    closest = np.square(points - centers[0]).sum(axis=1)

    for c in range(1, k):
        total = closest.sum()
        # fewer distinct points than clusters: any pick is a duplicate
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=closest / total)
        centers[c] = points[idx]
        closest = np.minimum(closest, np.square(points - centers[c]).sum(axis=1))

    return centers


def _sum_of_squares(points: np.ndarray, labels: np.ndarray, k: int) -> float:
    objective = 0.0
    for c in range(k):
        members = points[labels == c]
        if members.size:
            objective += float(np.square(members - members.mean(axis=0)).sum())
    return objective


def _single_restart(
    points: np.ndarray, k: int, seed: int, restart: int, max_iter: int
) -> tuple[np.ndarray, float, np.ndarray]:
    rng = np.random.default_rng([seed, restart])
    centers = _kmeans_plus_plus(points, k, rng)
    labels, history = _lloyd(points, centers, max_iter)
    return labels, _sum_of_squares(points, labels, k), history


def _check_monotonic(history: np.ndarray, restart: int) -> None:
    tolerance = 1e-12 * max(float(history.max(initial=0.0)), 1.0)
    increases = np.flatnonzero(np.diff(history) > tolerance)
    if increases.size:
        raise RuntimeError(
            f"k-means objective increased at iteration {int(increases[0]) + 1} of restart {restart}: "
            f"{history[increases[0]]} -> {history[increases[0] + 1]}"
        )


def kmeans(
    rows: np.ndarray,
    k: int,
    restarts: int | None = None,
    seed: int = 0,
    max_iter: int | None = None,
    workers: int | None = None,
    debug: bool | None = None,
) -> KMeansResult:
    """
    k-means with k-means++ seeding, run `restarts` times; the lowest objective wins.

    Every restart owns the random stream `default_rng([seed, restart])`, so the result does not depend on how
    restarts are scheduled over the thread pool. Ties on the objective go to the lowest restart index.

    Args:
        rows: (n, dim) points.
        k: Number of clusters, 1 <= k <= n.
        restarts: Number of independent restarts; defaults to `spectral.restarts`.
        seed: Nonnegative master seed.
        max_iter: Maximum Lloyd iterations per restart; defaults to `spectral.max_iter`.
        workers: Thread pool size; defaults to `spectral.workers`.
        debug: Check that the objective never increases; defaults to `spectral.debug`.

    Returns:
        The best KMeansResult. Clusters left empty (possible when there are fewer distinct rows than k) are
        listed in `empty_clusters`.

    Raises:
        ValueError: If arguments are out of range.

    """

    restarts = config.spectral.restarts if restarts is None else restarts
    max_iter = config.spectral.max_iter if max_iter is None else max_iter
    workers = workers or config.spectral.workers
    debug = config.spectral.debug if debug is None else debug

    if rows.ndim != 2:
        raise ValueError(f"Expected a 2D array of rows, got shape {rows.shape}.")
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n = {n}, but got {k}.")
    if restarts < 1:
        raise ValueError(f"restarts must be at least 1, but got {restarts}.")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, but got {max_iter}.")
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, but got {seed}.")

    points = np.ascontiguousarray(rows, dtype=np.float64)

    with ThreadPoolExecutor(max_workers=min(workers, restarts)) as executor:
        runs = list(executor.map(lambda idx: _single_restart(points, k, seed, idx, max_iter), range(restarts)))

    best_restart = 0
    for idx, (_, objective, history) in enumerate(runs):
        if debug:
            _check_monotonic(history, idx)
        if objective < runs[best_restart][1]:
            best_restart = idx

    labels, objective, history = runs[best_restart]
    if len(history) == max_iter:
        logger.debug(f"k-means restart {best_restart} stopped at max_iter={max_iter}")

    empty_clusters = np.flatnonzero(np.bincount(labels, minlength=k) == 0)
    if empty_clusters.size:
        logger.warning(f"k-means left {empty_clusters.size} empty cluster(s): {empty_clusters.tolist()}")

    return KMeansResult(
        labels=labels,
        objective=objective,
        empty_clusters=empty_clusters,
        best_restart=best_restart,
        history=history,
    )


# -------------------------------------------- Pipeline ---------------------------------------------


def _reassign_zero_degree(labels: np.ndarray, zero_degree: np.ndarray, distances: DistanceMatrix) -> np.ndarray:
    """Gives every zero-degree point the label of its nearest non-degenerate point."""
    healthy = np.setdiff1d(np.arange(labels.size), zero_degree)
    if not healthy.size:
        logger.warning("Every point has zero affinity degree; labels are left as k-means produced them")
        return np.empty(0, dtype=np.int64)

    nearest = healthy[distances.values[np.ix_(zero_degree, healthy)].argmin(axis=1)]
    labels[zero_degree] = labels[nearest]
    return zero_degree


def spectral_cluster(
    affinity: AffinityMatrix,
    k: int,
    restarts: int | None = None,
    seed: int = 0,
    distances: DistanceMatrix | None = None,
    max_iter: int | None = None,
    workers: int | None = None,
) -> ClusteringResult:
    """
    NJW spectral clustering: normalized Laplacian, top-k eigenvectors, row normalization and k-means.

    When `distances` are given, points with a zero affinity row are relabeled after their nearest
    non-degenerate point (by original distance) and listed in `reassigned`.

    Args:
        affinity: Affinity matrix of the points.
        k: Number of clusters.
        restarts: k-means restarts; defaults to `spectral.restarts`.
        seed: Master seed of the k-means restarts.
        distances: Original pairwise distances, used for the zero-degree reassignment.
        max_iter: Maximum Lloyd iterations; defaults to `spectral.max_iter`.
        workers: k-means thread pool size.

    Returns:
        The ClusteringResult with provenance.

    """

    restarts = config.spectral.restarts if restarts is None else restarts

    laplacian = normalized_laplacian(affinity)
    embedding = top_k_eigenvectors(laplacian.matrix, k)
    result = kmeans(embedding.rows, k, restarts=restarts, seed=seed, max_iter=max_iter, workers=workers)

    labels = result.labels.copy()
    reassigned = np.empty(0, dtype=np.int64)
    if laplacian.zero_degree.size and distances is not None:
        reassigned = _reassign_zero_degree(labels, laplacian.zero_degree, distances)

    empty_clusters = np.flatnonzero(np.bincount(labels, minlength=k) == 0)

    return ClusteringResult(
        labels=labels,
        k=k,
        kmeans_objective=result.objective,
        seed=seed,
        restarts_used=restarts,
        method=affinity.method,
        params=dict(affinity.params),
        eigenvalues=embedding.eigenvalues,
        zero_degree=laplacian.zero_degree,
        reassigned=reassigned,
        empty_clusters=empty_clusters,
    )
