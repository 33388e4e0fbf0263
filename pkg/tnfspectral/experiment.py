import dataclasses
from dataclasses import dataclass, field
from datetime import timedelta
from enum import Enum
from pathlib import Path
from time import perf_counter
from typing import Any, List, Optional

from loguru import logger
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from tnfspectral import AffinityMethod
from tnfspectral.affinities.topological import log_base_divisor
from tnfspectral.configs.config_loader import config
from tnfspectral.datasets import (
    DatasetFamily,
    LabeledDataset,
    Preprocessing,
    load_mnist_idx,
    load_shape_csv,
    load_uci_csv,
    normalize,
)
from tnfspectral.metrics import NmiAverage, adjusted_rand_index, clustering_error, normalized_mutual_info
from tnfspectral.neighborhood_graph import pairwise_distances
from tnfspectral.pipeline import GraphContext, SigmaGrid, SweepResult, build_graph_context, sigma_sweep
from tnfspectral.reporting import OutputFormat, emit_scatter_plot, emit_table, save_labels_csv, save_sweep_csv
from tnfspectral.tnf_features import PhiMode
from tnfspectral.utils import dataset_slug, derive_seed

DEFAULT_METHODS = [str(method) for method in AffinityMethod if method is not AffinityMethod.COMPOSED]


class ExperimentConfigError(ValueError):
    """Invalid experiment configuration; the message starts with the dotted path of the offending field."""


# ------------------------------------------- Config Schema -------------------------------------------
# Plain dataclasses (no slots) so that OmegaConf can use them as a structured schema.
# Enum-like fields are strings here and checked in `validate`, since OmegaConf matches enums by member name.


@dataclass
class DatasetSpec:
    path: str = "???"
    """Shape/UCI CSV file, or the IDX images file for MNIST."""

    family: str = str(DatasetFamily.SHAPE)
    name: Optional[str] = None
    preprocessing: Optional[str] = None
    """Defaults to the `preprocessing.<family>` entry of the library config."""

    # UCI
    label_column: int = -1
    delimiter: str = ","

    # MNIST
    labels_path: Optional[str] = None
    digits: List[int] = field(default_factory=list)
    per_digit: int = 0
    sample_seed: Optional[int] = None
    """Seed for sampling `per_digit` images per digit; None takes the first occurrences in file order."""

    # epsilon: absolute value, a single quantile or a list of quantiles to choose from
    epsilon: Optional[float] = None
    epsilon_quantile: Optional[float] = None
    epsilon_quantiles: List[float] = field(default_factory=list)

    k: Optional[int] = None


@dataclass
class SigmaGridSpec:
    start: float = config.sweep.start
    stop: float = config.sweep.stop
    step: float = config.sweep.step


@dataclass
class ExperimentConfig:
    datasets: List[DatasetSpec] = field(default_factory=list)
    methods: List[str] = field(default_factory=lambda: list(DEFAULT_METHODS))
    sigma_grid: SigmaGridSpec = field(default_factory=SigmaGridSpec)
    k: Optional[int] = None
    seed: int = config.experiment.seed
    restarts: int = config.spectral.restarts
    workers: int = config.experiment.workers
    phi_mode: str = config.tnf.phi_mode
    si_depth: int = config.tnf.si_depth
    eta_smoothing: bool = config.affinity.eta_smoothing
    log_base: str = str(config.affinity.log_base)
    self_tuning_k: int = config.affinity.self_tuning_k
    nmi_average: str = config.metrics.nmi_average
    out_dir: str = config.experiment.out_dir
    format: str = config.experiment.format

    @property
    def grid(self) -> SigmaGrid:
        """Sigma grid of the sweep."""
        return SigmaGrid(start=self.sigma_grid.start, stop=self.sigma_grid.stop, step=self.sigma_grid.step)

    @property
    def affinity_params(self) -> dict[str, Any]:
        """Keyword parameters forwarded to the affinity builders."""
        return {"eta_smoothing": self.eta_smoothing, "log_base": self.log_base, "self_tuning_k": self.self_tuning_k}


def load_experiment_config(
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> ExperimentConfig:
    """
    Builds an ExperimentConfig from the schema defaults, an optional JSON file and CLI overrides (in that order).

    Args:
        path: JSON experiment file.
        overrides: Values that win over the file, e.g. parsed command-line flags. None values are ignored.

    Returns:
        The validated ExperimentConfig.

    Raises:
        FileNotFoundError: If the file does not exist.
        ExperimentConfigError: If a field has the wrong type, is unknown or fails validation.

    """

    layers = [OmegaConf.structured(ExperimentConfig)]
    if path is not None:
        path = Path(path)
        if not path.is_file():
            logger.error(f"Experiment config `{path}` is not found")
            raise FileNotFoundError(f"Experiment config `{path}` is not found.")
        layers.append(OmegaConf.load(path))
    if overrides:
        layers.append(OmegaConf.create({key: value for key, value in overrides.items() if value is not None}))

    try:
        merged = OmegaConf.merge(*layers)
        experiment = OmegaConf.to_object(merged)
    except OmegaConfBaseException as err:
        key = getattr(err, "full_key", None) or "<root>"
        raise ExperimentConfigError(f"{key}: {getattr(err, 'msg', err)}") from err

    assert isinstance(experiment, ExperimentConfig)
    validate(experiment)
    return experiment


def _check_choice(path: str, value: Any, choices: type[Enum]) -> None:
    try:
        choices(value)
    except ValueError:
        allowed = [str(choice) for choice in choices]
        raise ExperimentConfigError(f"{path}: unknown value `{value}`, expected one of {allowed}") from None


def _validate_dataset(idx: int, spec: DatasetSpec) -> None:
    prefix = f"datasets[{idx}]"
    _check_choice(f"{prefix}.family", spec.family, DatasetFamily)
    if spec.preprocessing is not None:
        _check_choice(f"{prefix}.preprocessing", spec.preprocessing, Preprocessing)

    if not Path(spec.path).is_file():
        raise ExperimentConfigError(f"{prefix}.path: file `{spec.path}` does not exist")

    if DatasetFamily(spec.family) is DatasetFamily.MNIST:
        if spec.labels_path is None or not Path(spec.labels_path).is_file():
            raise ExperimentConfigError(f"{prefix}.labels_path: file `{spec.labels_path}` does not exist")
        if not spec.digits:
            raise ExperimentConfigError(f"{prefix}.digits: must not be empty")
        if spec.per_digit < 1:
            raise ExperimentConfigError(f"{prefix}.per_digit: must be at least 1, got {spec.per_digit}")
        if spec.sample_seed is not None and spec.sample_seed < 0:
            raise ExperimentConfigError(f"{prefix}.sample_seed: must be nonnegative, got {spec.sample_seed}")

    epsilon_sources = sum([spec.epsilon is not None, spec.epsilon_quantile is not None, bool(spec.epsilon_quantiles)])
    if epsilon_sources > 1:
        raise ExperimentConfigError(f"{prefix}: set only one of epsilon, epsilon_quantile and epsilon_quantiles")
    if spec.epsilon is not None and not spec.epsilon > 0:
        raise ExperimentConfigError(f"{prefix}.epsilon: must be positive, got {spec.epsilon}")
    quantiles = ([spec.epsilon_quantile] if spec.epsilon_quantile is not None else []) + list(spec.epsilon_quantiles)
    for quantile in quantiles:
        if not 0 < quantile <= 1:
            raise ExperimentConfigError(f"{prefix}.epsilon_quantile: must be in (0, 1], got {quantile}")
    if spec.k is not None and spec.k < 1:
        raise ExperimentConfigError(f"{prefix}.k: must be at least 1, got {spec.k}")


def validate(experiment: ExperimentConfig) -> None:
    """
    Checks the semantic constraints that the schema types cannot express.

    Args:
        experiment: Config to check.

    Raises:
        ExperimentConfigError: On the first violated constraint, prefixed with its field path.

    """

    if not experiment.methods:
        raise ExperimentConfigError("methods: must not be empty")
    for idx, method in enumerate(experiment.methods):
        _check_choice(f"methods[{idx}]", method, AffinityMethod)

    try:
        experiment.grid.values()
    except ValueError as err:
        raise ExperimentConfigError(f"sigma_grid: {err}") from err

    if experiment.k is not None and experiment.k < 1:
        raise ExperimentConfigError(f"k: must be at least 1, got {experiment.k}")
    if experiment.seed < 0:
        raise ExperimentConfigError(f"seed: must be nonnegative, got {experiment.seed}")
    if experiment.restarts < 1:
        raise ExperimentConfigError(f"restarts: must be at least 1, got {experiment.restarts}")
    if experiment.workers < 1:
        raise ExperimentConfigError(f"workers: must be at least 1, got {experiment.workers}")
    if experiment.si_depth < 1:
        raise ExperimentConfigError(f"si_depth: must be at least 1, got {experiment.si_depth}")
    if experiment.self_tuning_k < 1:
        raise ExperimentConfigError(f"self_tuning_k: must be at least 1, got {experiment.self_tuning_k}")

    _check_choice("phi_mode", experiment.phi_mode, PhiMode)
    _check_choice("nmi_average", experiment.nmi_average, NmiAverage)
    _check_choice("format", experiment.format, OutputFormat)
    try:
        log_base_divisor(experiment.log_base)
    except ValueError as err:
        raise ExperimentConfigError(f"log_base: {err}") from err

    for idx, spec in enumerate(experiment.datasets):
        _validate_dataset(idx, spec)


# ---------------------------------------------- Records ----------------------------------------------


@dataclass(kw_only=True, frozen=True)
class ResultRecord:
    dataset: str
    method: str
    sigma: float | None
    """Best sigma of the sweep; None for methods without a global scale."""

    epsilon: float | None
    """Graph radius used; None for methods that ignore the graph."""

    k: int
    ari: float
    nmi: float
    ce: float
    wall_time: float
    """Seconds spent on the cell, sweeps included."""

    seed: int

    def __post_init__(self) -> None:
        """Checks that the metrics are within their ranges."""  # noqa: DOC501
        if not -1.0 <= self.ari <= 1.0:
            raise ValueError(f"ARI out of range: {self.ari}")
        if not 0.0 <= self.nmi <= 1.0:
            raise ValueError(f"NMI out of range: {self.nmi}")
        if not 0.0 <= self.ce <= 1.0:
            raise ValueError(f"CE out of range: {self.ce}")

    def to_dict(self) -> dict[str, Any]:
        """Plain dictionary of the record, ready for JSON."""
        return dataclasses.asdict(self)


# ---------------------------------------------- Runner ----------------------------------------------


def load_dataset(spec: DatasetSpec) -> LabeledDataset:
    """
    Loads and preprocesses the dataset described by `spec`.

    Args:
        spec: Dataset entry of the experiment config.

    Returns:
        The labeled dataset, renamed to `spec.name` if given.

    Raises:
        ValueError: If the dataset has no ground-truth labels.

    """

    family = DatasetFamily(spec.family)
    if family is DatasetFamily.SHAPE:
        dataset = load_shape_csv(spec.path)
    elif family is DatasetFamily.UCI:
        dataset = load_uci_csv(spec.path, label_column=spec.label_column, delimiter=spec.delimiter)
    else:
        assert spec.labels_path is not None
        dataset = load_mnist_idx(spec.path, spec.labels_path, spec.digits, spec.per_digit, seed=spec.sample_seed)

    preprocessing = Preprocessing(spec.preprocessing or config.preprocessing[str(family)])
    dataset = normalize(dataset, preprocessing)

    if spec.name:
        dataset = dataclasses.replace(dataset, name=spec.name)
    if dataset.labels is None:
        raise ValueError(f"Dataset `{dataset.name}` has no ground-truth labels.")
    return dataset


def _graph_contexts(dataset: LabeledDataset, spec: DatasetSpec, experiment: ExperimentConfig) -> list[GraphContext]:
    distances = pairwise_distances(dataset)
    shared = {"phi_mode": experiment.phi_mode, "si_depth": experiment.si_depth, "distances": distances}

    if spec.epsilon is not None:
        return [build_graph_context(dataset, epsilon=spec.epsilon, **shared)]

    quantiles = spec.epsilon_quantiles or [spec.epsilon_quantile or config.graph.epsilon_quantile]
    return [build_graph_context(dataset, epsilon_quantile=quantile, **shared) for quantile in quantiles]


def run_cell(
    method: AffinityMethod,
    contexts: list[GraphContext],
    k: int,
    experiment: ExperimentConfig,
) -> tuple[ResultRecord, SweepResult]:
    """
    Sweeps sigma (and epsilon, for graph-based methods) for one dataset and one method, then scores the winner.

    Args:
        method: Affinity method.
        contexts: Graph contexts of the dataset, one per epsilon candidate.
        k: Number of clusters.
        experiment: Experiment settings.

    Returns:
        The ResultRecord and the winning SweepResult.

    """

    dataset = contexts[0].dataset
    truth = dataset.labels
    assert truth is not None
    cell_seed = derive_seed(experiment.seed, dataset.name, str(method))

    start = perf_counter()
    candidates = contexts if method.uses_graph else contexts[:1]
    best_context, best_sweep = None, None
    for context in candidates:
        sweep = sigma_sweep(
            method,
            context,
            experiment.grid,
            k=k,
            restarts=experiment.restarts,
            seed=cell_seed,
            workers=experiment.workers,
            **experiment.affinity_params,
        )
        if best_sweep is None or sweep.best_score > best_sweep.best_score:
            best_context, best_sweep = context, sweep
    wall_time = perf_counter() - start

    assert best_context is not None and best_sweep is not None
    labels = best_sweep.best_result.labels
    record = ResultRecord(
        dataset=dataset.name,
        method=str(method),
        sigma=best_sweep.best_sigma,
        epsilon=best_context.epsilon if method.uses_graph else None,
        k=k,
        ari=adjusted_rand_index(labels, truth),
        nmi=normalized_mutual_info(labels, truth, average=experiment.nmi_average),
        ce=clustering_error(labels, truth),
        wall_time=wall_time,
        seed=experiment.seed,
    )
    logger.info(
        f"{record.dataset} / {record.method}: ARI={record.ari:.4f} NMI={record.nmi:.4f} CE={record.ce:.4f} "
        f"({timedelta(seconds=wall_time)})"
    )
    return record, best_sweep


def run(experiment: ExperimentConfig) -> list[ResultRecord]:
    """
    Runs every (dataset, method) cell of the experiment and writes all artifacts to `experiment.out_dir`.

    Per cell: load, normalize, distances, epsilon-graph and TNFs, sigma sweep maximizing ARI, then NMI and CE at
    the ARI-optimal sigma. Writes `results.<format>`, `labels/<dataset>_<method>.csv`,
    `sweeps/<dataset>_<method>.csv` and, for 2-D datasets, `plots/<dataset>_<method>.svg`.

    Args:
        experiment: Validated experiment config.

    Returns:
        One ResultRecord per cell, in config order.

    Raises:
        ExperimentConfigError: If the config lists no dataset.

    """

    if not experiment.datasets:
        raise ExperimentConfigError("datasets: must not be empty")

    out_dir = Path(experiment.out_dir)
    methods = [AffinityMethod(method) for method in experiment.methods]
    records = []

    total_start = perf_counter()
    for spec in experiment.datasets:
        dataset = load_dataset(spec)
        k = experiment.k or spec.k or dataset.k_true
        assert k is not None
        contexts = _graph_contexts(dataset, spec, experiment)
        slug = dataset_slug(dataset.name)

        for method in methods:
            record, sweep = run_cell(method, contexts, k, experiment)
            records.append(record)

            labels = sweep.best_result.labels
            assert dataset.labels is not None
            save_labels_csv(labels, dataset.labels, out_dir / "labels" / f"{slug}_{method}.csv")
            save_sweep_csv(sweep, out_dir / "sweeps" / f"{slug}_{method}.csv")
            if dataset.n_features == 2:
                emit_scatter_plot(dataset, labels, out_dir / "plots" / f"{slug}_{method}.svg")

    table_path = emit_table(records, experiment.format, out_dir)
    logger.info(f"Results written to `{table_path}`, full run took {timedelta(seconds=perf_counter() - total_start)}")

    return records

