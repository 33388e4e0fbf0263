import importlib
import math
import pkgutil
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import timedelta
from functools import cache
from time import perf_counter
from typing import Any

import numpy as np
from loguru import logger
from tqdm import tqdm

from tnfspectral import AFFINITY_REGISTRY, AffinityMethod, affinities
from tnfspectral.affinity_matrix import AffinityMatrix
from tnfspectral.configs.config_loader import config
from tnfspectral.datasets import LabeledDataset
from tnfspectral.metrics import adjusted_rand_index
from tnfspectral.neighborhood_graph import (
    DistanceMatrix,
    NeighborhoodGraph,
    build_epsilon_graph,
    common_neighbor_matrix,
    pairwise_distances,
    suggest_epsilon,
)
from tnfspectral.spectral_engine import ClusteringResult, spectral_cluster
from tnfspectral.tnf_features import PhiMode, TnfProfile, compute_tnf_profile, zeta_matrix
from tnfspectral.utils import derive_seed

# grid values are rounded so that decimal steps produce exactly the expected points
GRID_DECIMALS = 10


# ------------------------------------------ Graph Context ------------------------------------------


@dataclass(kw_only=True, slots=True, frozen=True)
class GraphContext:
    """Everything the affinity builders need about one dataset at one epsilon, computed once."""

    dataset: LabeledDataset
    distances: DistanceMatrix
    graph: NeighborhoodGraph
    tnf: TnfProfile
    shared_neighbors: np.ndarray
    """Common-neighbor counts eta (Adj @ Adj)."""

    zeta: np.ndarray
    """Pairwise distances between Summation Index vectors."""

    def __post_init__(self) -> None:
        """Locks the arrays."""
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value.setflags(write=False)

    @property
    def epsilon(self) -> float:
        """Connection radius of the graph."""
        return self.graph.epsilon


def build_graph_context(
    dataset: LabeledDataset,
    epsilon: float | None = None,
    epsilon_quantile: float | None = None,
    phi_mode: PhiMode | str | None = None,
    si_depth: int | None = None,
    distances: DistanceMatrix | None = None,
) -> GraphContext:
    """
    Computes distances, the epsilon-graph and the TNF profile of a dataset.

    Epsilon is either given directly or picked as a quantile of the pairwise distances; with neither,
    `graph.epsilon_quantile` from the config is used.

    Args:
        dataset: The points.
        epsilon: Absolute connection radius.
        epsilon_quantile: Quantile of pairwise distances used as radius.
        phi_mode: Clustering-coefficient mode of the TNF profile.
        si_depth: Summation Index depth.
        distances: Precomputed pairwise distances of `dataset`.

    Returns:
        The GraphContext.

    Raises:
        ValueError: If both `epsilon` and `epsilon_quantile` are given.

    """

    if epsilon is not None and epsilon_quantile is not None:
        raise ValueError("Specify either epsilon or epsilon_quantile, not both.")

    distances = distances if distances is not None else pairwise_distances(dataset)
    if epsilon is None:
        epsilon = suggest_epsilon(distances, epsilon_quantile or config.graph.epsilon_quantile)

    graph = build_epsilon_graph(distances, epsilon)
    tnf = compute_tnf_profile(graph, phi_mode=phi_mode, depth=si_depth)

    return GraphContext(
        dataset=dataset,
        distances=distances,
        graph=graph,
        tnf=tnf,
        shared_neighbors=common_neighbor_matrix(graph),
        zeta=zeta_matrix(tnf.si),
    )


# ------------------------------------------ Affinity Registry ------------------------------------------


@cache
def discover_affinities() -> None:
    """Scans and imports modules from the `affinities` folder, triggering the @register_affinity decorators."""

    logger.debug(" Discovering Affinity Implementations ".center(50, "-"))
    for _, module_name, _ in pkgutil.iter_modules(affinities.__path__):
        importlib.import_module(f"tnfspectral.affinities.{module_name}")
        logger.debug(f"Loaded: {module_name}")


def build_affinity(
    method: AffinityMethod | str,
    context: GraphContext,
    sigma: float | None = None,
    **params: Any,
) -> AffinityMatrix:
    """
    Builds the affinity of `method` through its registered builder.

    Args:
        method: Affinity method.
        context: Graph context of the dataset.
        sigma: Gaussian scale, required by every method except `self-tuning`.
        **params: Builder-specific parameters (`eta_smoothing`, `log_base`, `self_tuning_k`).

    Returns:
        The affinity matrix.

    Raises:
        ValueError: If the method has no registered builder or sigma is missing.

    """

    method = AffinityMethod(method)
    discover_affinities()

    if method not in AFFINITY_REGISTRY:
        raise ValueError(f"Affinity `{method}` has no implementation in affinities/ folder.")
    if method.uses_sigma and sigma is None:
        raise ValueError(f"Affinity `{method}` requires sigma.")

    return AFFINITY_REGISTRY[method](context, sigma, **params)


# -------------------------------------------- Sigma Grid --------------------------------------------


@dataclass(kw_only=True, slots=True, frozen=True)
class SigmaGrid:
    start: float
    stop: float
    """Inclusive upper end."""

    step: float

    def __post_init__(self) -> None:
        """Validates that the grid is nonempty and strictly positive."""  # noqa: DOC501
        if not self.start > 0:
            raise ValueError(f"Sigma grid start must be positive, but got {self.start}.")
        if not self.step > 0:
            raise ValueError(f"Sigma grid step must be positive, but got {self.step}.")
        if self.stop < self.start:
            raise ValueError(f"Sigma grid is empty: stop {self.stop} < start {self.start}.")

    def values(self) -> np.ndarray:
        """Grid points from start to stop inclusive, rounded to GRID_DECIMALS."""
        n_points = math.floor((self.stop - self.start) / self.step + 1e-9) + 1
        return np.round(self.start + self.step * np.arange(n_points), GRID_DECIMALS)

    def __len__(self) -> int:
        """Number of grid points."""
        return len(self.values())


def parse_sigma_grid(text: str) -> SigmaGrid:
    """
    Parses `start:stop:step` into a SigmaGrid.

    Args:
        text: Grid description, e.g. `0.01:10:0.01`.

    Returns:
        The SigmaGrid.

    Raises:
        ValueError: If the text is not three numbers separated by colons.

    """

    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"Sigma grid must look like `start:stop:step`, got `{text}`.")
    try:
        start, stop, step = (float(part) for part in parts)
    except ValueError as err:
        raise ValueError(f"Sigma grid must contain numbers, got `{text}`.") from err
    return SigmaGrid(start=start, stop=stop, step=step)


def default_sigma_grid() -> SigmaGrid:
    """Sigma grid from the `sweep` section of the config."""
    return SigmaGrid(start=config.sweep.start, stop=config.sweep.stop, step=config.sweep.step)


# -------------------------------------------- Sigma Sweep --------------------------------------------


@dataclass(kw_only=True, slots=True, frozen=True)
class SweepResult:
    method: AffinityMethod
    best_sigma: float | None
    """None for methods that do not use sigma."""

    best_score: float
    best_result: ClusteringResult
    scores: list[tuple[float | None, float]] = field(default_factory=list)
    """Every evaluated (sigma, score) pair, in grid order."""


def sigma_sweep(
    method: AffinityMethod | str,
    context: GraphContext,
    grid: SigmaGrid | Sequence[float] | None = None,
    k: int | None = None,
    restarts: int | None = None,
    seed: int = 0,
    workers: int | None = None,
    objective: Callable[[np.ndarray, np.ndarray], float] = adjusted_rand_index,
    **params: Any,
) -> SweepResult:
    """
    Runs the full clustering pipeline for every sigma of the grid and keeps the one maximizing `objective`.

    Grid points run concurrently; each one clusters with the seed derived from (seed, grid index), so the
    outcome does not depend on scheduling. Ties go to the smallest sigma. Methods that do not use sigma are
    evaluated once.

    Args:
        method: Affinity method.
        context: Graph context of a labeled dataset.
        grid: Sigma values; defaults to the `sweep` section of the config.
        k: Number of clusters; defaults to the number of ground-truth classes.
        restarts: k-means restarts per evaluation.
        seed: Master seed.
        workers: Thread pool size; defaults to `experiment.workers`.
        objective: Score to maximize, called as objective(predicted, truth).
        **params: Extra affinity parameters.

    Returns:
        The SweepResult with every (sigma, score) pair.

    Raises:
        ValueError: If the dataset has no labels or the grid is empty.

    """

    method = AffinityMethod(method)
    truth = context.dataset.labels
    if truth is None:
        raise ValueError(f"Dataset `{context.dataset.name}` has no ground truth to score a sigma sweep.")

    k = k or context.dataset.k_true
    workers = workers or config.experiment.workers

    if not method.uses_sigma:
        sigmas: list[float | None] = [None]
    else:
        values = (grid or default_sigma_grid()).values() if isinstance(grid, SigmaGrid | None) else grid
        sigmas = [float(sigma) for sigma in values]
    if not sigmas:
        raise ValueError("Sigma grid is empty.")

    def evaluate(idx: int) -> tuple[float, ClusteringResult]:
        affinity = build_affinity(method, context, sigmas[idx], **params)
        result = spectral_cluster(
            affinity,
            k,
            restarts=restarts,
            seed=derive_seed(seed, idx),
            distances=context.distances,
            workers=1,
        )
        return float(objective(result.labels, truth)), result

    start = perf_counter()
    scores: list[tuple[float | None, float]] = []
    best_idx, best_score, best_result = 0, -math.inf, None

    with ThreadPoolExecutor(max_workers=min(workers, len(sigmas))) as executor:
        progress = tqdm(
            executor.map(evaluate, range(len(sigmas))),
            total=len(sigmas),
            desc=f"Sigma sweep `{method}` on `{context.dataset.name}`",
            ascii=True,
            disable=len(sigmas) == 1,
        )
        for idx, (score, result) in enumerate(progress):
            sigma = sigmas[idx]
            scores.append((sigma, score))
            logger.debug(f"{method} sigma={sigma} score={score:.4f}")
            best_sigma = sigmas[best_idx]
            tie_smaller = score == best_score and sigma is not None and best_sigma is not None and sigma < best_sigma
            if score > best_score or tie_smaller:
                best_idx, best_score, best_result = idx, score, result

    elapsed = timedelta(seconds=perf_counter() - start)
    logger.info(
        f"`{method}` on `{context.dataset.name}`: best sigma={sigmas[best_idx]} score={best_score:.4f} "
        f"({len(sigmas)} evaluation(s), {elapsed})"
    )

    assert best_result is not None
    return SweepResult(
        method=method,
        best_sigma=sigmas[best_idx],
        best_score=best_score,
        best_result=best_result,
        scores=scores,
    )
