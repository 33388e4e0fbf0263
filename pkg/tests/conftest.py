import numpy as np
import pytest

from tnfspectral.datasets import LabeledDataset
from tnfspectral.neighborhood_graph import DistanceMatrix, NeighborhoodGraph, build_epsilon_graph


def make_graph(adjacency: np.ndarray) -> NeighborhoodGraph:
    """Builds an epsilon-graph with exactly the given adjacency (edges at distance 1, non-edges at 2)."""
    adjacency = np.asarray(adjacency, dtype=bool)
    values = np.where(adjacency, 1.0, 2.0)
    np.fill_diagonal(values, 0.0)
    return build_epsilon_graph(DistanceMatrix(values=values), epsilon=1.0)


def make_blobs(centers, per_blob: int = 20, spread: float = 0.3, seed: int = 0, name: str = "blobs"):
    rng = np.random.default_rng(seed)
    points = np.concatenate([rng.normal(center, spread, size=(per_blob, 2)) for center in centers])
    labels = np.repeat(np.arange(len(centers), dtype=np.int64), per_blob)
    return LabeledDataset(points=points, labels=labels, name=name)


@pytest.fixture
def two_blobs() -> LabeledDataset:
    """Two tight, far-apart Gaussian blobs of 20 points each."""
    return make_blobs([(0.0, 0.0), (10.0, 10.0)])


@pytest.fixture
def triangle_with_tail():
    """Triangle 0-1-2 with a pendant node 3 attached to node 2."""
    adjacency = np.array([
        [0, 1, 1, 0],
        [1, 0, 1, 0],
        [1, 1, 0, 1],
        [0, 0, 1, 0],
    ])
    return make_graph(adjacency)


@pytest.fixture
def graph_factory():
    """Returns `make_graph` so tests can build graphs from explicit adjacency matrices."""
    return make_graph


@pytest.fixture
def blobs_factory():
    """Returns `make_blobs` for tests that need custom blob layouts."""
    return make_blobs
