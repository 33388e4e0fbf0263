import math
from typing import TYPE_CHECKING, Any

import numpy as np

from tnfspectral import AffinityMethod, register_affinity
from tnfspectral.affinities.gaussian import check_sigma
from tnfspectral.affinity_matrix import AffinityMatrix, finalize_affinity
from tnfspectral.configs.config_loader import config
from tnfspectral.neighborhood_graph import DistanceMatrix, NeighborhoodGraph, common_neighbor_matrix
from tnfspectral.tnf_features import TnfProfile, zeta_matrix

if TYPE_CHECKING:
    from tnfspectral.pipeline import GraphContext

LOG_BASES = {"e": 1.0, "10": math.log(10.0), "2": math.log(2.0)}


def log_base_divisor(log_base: str | float) -> float:
    """
    Natural log of the requested base: log_b(x) = ln(x) / ln(b).

    Args:
        log_base: One of `e`, `10`, `2` (numbers are accepted and compared by their string form).

    Returns:
        ln(b).

    Raises:
        ValueError: If the base is not supported.

    """

    key = str(log_base).strip().lower()
    key = key[:-2] if key.endswith(".0") else key
    if key not in LOG_BASES:
        raise ValueError(f"Unsupported log base `{log_base}`. Expected one of {list(LOG_BASES)}.")
    return LOG_BASES[key]


def tnf1_affinity(
    distances: DistanceMatrix,
    graph: NeighborhoodGraph,
    tnf: TnfProfile,
    sigma: float,
    eta_smoothing: bool = False,
    shared: np.ndarray | None = None,
) -> AffinityMatrix:
    """
    Density and common-neighbor affinity (TNF1).

    beta_ij = exp(-tau_ij^2 * delta_ij / (2 sigma^2)) * eta_ij, with delta_ij = |phi_i - phi_j| and
    eta_ij the number of shared neighbors.

    Two consequences of the formula are kept as they are:
    - delta_ij = 0 (equal local density) makes the exponential exactly 1, so the distance drops out and
      beta_ij = eta_ij;
    - eta_ij = 0 zeroes the affinity whatever the distance. `eta_smoothing` replaces eta with eta + 1.

    Args:
        distances: Pairwise distances tau.
        graph: Epsilon-graph over the same points.
        tnf: TNF profile of the graph (phi is used).
        sigma: Kernel width.
        eta_smoothing: Use eta + 1 instead of eta.
        shared: Optional precomputed common-neighbor counts (Adj @ Adj).

    Returns:
        The TNF1 affinity (beta).

    Raises:
        ValueError: If distances, graph and profile sizes disagree.

    """

    check_sigma(sigma)
    if not distances.n_points == graph.n_nodes == tnf.n_nodes:
        raise ValueError(
            f"Inconsistent sizes: {distances.n_points} distances, {graph.n_nodes} graph nodes, "
            f"{tnf.n_nodes} TNF rows."
        )

    shared = common_neighbor_matrix(graph) if shared is None else shared
    eta = shared + 1.0 if eta_smoothing else shared.astype(np.float64)

    phi = tnf.phi.astype(np.float64)
    delta = np.abs(phi[:, None] - phi[None, :])

    values = np.exp(-np.square(distances.values) * delta / (2.0 * sigma**2)) * eta
    return finalize_affinity(
        values,
        AffinityMethod.TNF1,
        sigma=float(sigma),
        epsilon=graph.epsilon,
        phi_mode=str(tnf.phi_mode),
        eta_smoothing=bool(eta_smoothing),
    )


def tnf2_affinity(
    beta: AffinityMatrix,
    tnf: TnfProfile,
    log_base: str | float = "e",
    zeta: np.ndarray | None = None,
) -> AffinityMatrix:
    """
    Structural-similarity amplified affinity (TNF2).

    A_ij = beta_ij * (1 + 1 / (1 + log(1 + zeta_ij))), zeta_ij being the distance between SI vectors.
    The multiplier lies in (1, 2] and equals 2 only for structurally identical nodes, so beta <= A <= 2 beta.

    Args:
        beta: TNF1 affinity.
        tnf: TNF profile of the same graph (SI vectors are used).
        log_base: Base of the logarithm (`e`, `10` or `2`).
        zeta: Optional precomputed zeta matrix.

    Returns:
        The TNF2 affinity.

    Raises:
        ValueError: If `beta` is not a TNF1 affinity or sizes disagree.

    """

    if beta.method is not AffinityMethod.TNF1:
        raise ValueError(f"TNF2 amplifies a TNF1 affinity, but got a `{beta.method}` affinity.")
    if beta.n_points != tnf.n_nodes:
        raise ValueError(f"Affinity has {beta.n_points} points but the TNF profile has {tnf.n_nodes} rows.")

    zeta = zeta_matrix(tnf.si) if zeta is None else zeta
    log_zeta = np.log1p(zeta) / log_base_divisor(log_base)
    multiplier = 1.0 + 1.0 / (1.0 + log_zeta)

    return finalize_affinity(beta.values * multiplier, AffinityMethod.TNF2, **beta.params, log_base=str(log_base))


@register_affinity(AffinityMethod.TNF1)
def build_tnf1(context: "GraphContext", sigma: float, **params: Any) -> AffinityMatrix:
    """Registry entry: TNF1 affinity of the context."""
    eta_smoothing = params.get("eta_smoothing", config.affinity.eta_smoothing)
    return tnf1_affinity(
        context.distances,
        context.graph,
        context.tnf,
        sigma,
        eta_smoothing=eta_smoothing,
        shared=context.shared_neighbors,
    )


@register_affinity(AffinityMethod.TNF2)
def build_tnf2(context: "GraphContext", sigma: float, **params: Any) -> AffinityMatrix:
    """Registry entry: TNF2 affinity of the context."""
    beta = build_tnf1(context, sigma, **params)
    log_base = params.get("log_base", config.affinity.log_base)
    return tnf2_affinity(beta, context.tnf, log_base=log_base, zeta=context.zeta)
