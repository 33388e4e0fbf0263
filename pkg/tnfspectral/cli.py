import sys
from pathlib import Path
from typing import Annotated, Any, List, Optional

import typer
from loguru import logger

from tnfspectral import AffinityMethod
from tnfspectral.experiment import DatasetSpec, ExperimentConfig, load_dataset, load_experiment_config, run, validate
from tnfspectral.pipeline import parse_sigma_grid
from tnfspectral.reporting import emit_scatter_plot, load_labels_csv

app = typer.Typer(
    name="tnfspectral",
    help="Spectral clustering with topological node feature affinities.",
    add_completion=False,
)

CLI_ERRORS = (ValueError, FileNotFoundError, OverflowError, RuntimeError)

# ----------------------------------------- Shared Options ------------------------------------------

DatasetOption = Annotated[
    Optional[List[Path]], typer.Option("--dataset", "-d", help="Dataset file (repeat for several datasets)")
]
FamilyOption = Annotated[str, typer.Option("--family", help="Dataset family: shape, uci or mnist")]
MethodOption = Annotated[
    Optional[str], typer.Option("--method", "-m", help="Comma-separated methods, e.g. `gaussian,tnf2`")
]
EpsilonOption = Annotated[Optional[float], typer.Option("--epsilon", help="Absolute epsilon-graph radius")]
EpsilonQuantileOption = Annotated[
    Optional[float], typer.Option("--epsilon-quantile", help="Epsilon as a quantile of pairwise distances")
]
KOption = Annotated[Optional[int], typer.Option("--k", "-k", help="Number of clusters (default: ground truth)")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Master seed")]
RestartsOption = Annotated[Optional[int], typer.Option("--restarts", help="k-means restarts")]
PhiModeOption = Annotated[Optional[str], typer.Option("--phi-mode", help="Clustering coefficient: nodes or edges")]
EtaSmoothingOption = Annotated[
    Optional[bool], typer.Option("--eta-smoothing/--no-eta-smoothing", help="Use eta + 1 in TNF1/TNF2")
]
OutDirOption = Annotated[Optional[Path], typer.Option("--out-dir", "-o", help="Output folder")]
FormatOption = Annotated[Optional[str], typer.Option("--format", help="Result table format: csv, json or markdown")]
ConfigOption = Annotated[Optional[Path], typer.Option("--config", "-c", help="JSON experiment file")]
VerboseOption = Annotated[bool, typer.Option("--verbose", "-v", help="Enable debug logging")]


def _configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")


def _fail(err: Exception) -> typer.Exit:
    typer.secho(f"Error: {err}", err=True, fg=typer.colors.RED)
    return typer.Exit(1)


def _build_config(
    config_path: Path | None,
    datasets: list[Path] | None,
    family: str,
    epsilon: float | None,
    epsilon_quantile: float | None,
    **overrides: Any,
) -> ExperimentConfig:
    """Merges the experiment file with the command-line flags; flags win."""

    if overrides.get("methods") is not None:
        overrides["methods"] = [method.strip() for method in overrides["methods"].split(",") if method.strip()]
    if overrides.get("out_dir") is not None:
        overrides["out_dir"] = str(overrides["out_dir"])
    if datasets:
        overrides["datasets"] = [{"path": str(path), "family": family} for path in datasets]

    experiment = load_experiment_config(config_path, overrides)

    # epsilon flags apply to every dataset of the experiment
    if epsilon is not None or epsilon_quantile is not None:
        for spec in experiment.datasets:
            spec.epsilon, spec.epsilon_quantile, spec.epsilon_quantiles = epsilon, epsilon_quantile, []
        validate(experiment)

    return experiment


def _report(experiment: ExperimentConfig) -> None:
    records = run(experiment)
    for record in records:
        sigma = "-" if record.sigma is None else f"{record.sigma:g}"
        typer.echo(
            f"{record.dataset:<16} {record.method:<12} sigma={sigma:<8} "
            f"ARI={record.ari:.4f}  NMI={record.nmi:.4f}  CE={record.ce:.4f}"
        )
    typer.echo(f"Results saved to {experiment.out_dir}")


# -------------------------------------------- Commands --------------------------------------------


@app.command()
def cluster(
    dataset: DatasetOption = None,
    family: FamilyOption = "shape",
    method: MethodOption = None,
    sigma: Annotated[Optional[float], typer.Option("--sigma", "-s", help="Gaussian scale")] = None,
    epsilon: EpsilonOption = None,
    epsilon_quantile: EpsilonQuantileOption = None,
    k: KOption = None,
    seed: SeedOption = None,
    restarts: RestartsOption = None,
    phi_mode: PhiModeOption = None,
    eta_smoothing: EtaSmoothingOption = None,
    out_dir: OutDirOption = None,
    output_format: FormatOption = None,
    config_path: ConfigOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Clusters with a single sigma per method and scores the result."""

    _configure_logging(verbose)
    try:
        experiment = _build_config(
            config_path,
            dataset,
            family,
            epsilon,
            epsilon_quantile,
            methods=method,
            sigma_grid={"start": sigma, "stop": sigma, "step": 1.0} if sigma is not None else None,
            k=k,
            seed=seed,
            restarts=restarts,
            phi_mode=phi_mode,
            eta_smoothing=eta_smoothing,
            out_dir=out_dir,
            format=output_format,
        )
        needs_sigma = any(AffinityMethod(name).uses_sigma for name in experiment.methods)
        if sigma is None and needs_sigma:
            raise ValueError("--sigma is required unless every method is `self-tuning`.")
        _report(experiment)
    except CLI_ERRORS as err:
        raise _fail(err) from err


@app.command()
def sweep(
    dataset: DatasetOption = None,
    family: FamilyOption = "shape",
    method: MethodOption = None,
    sigma_grid: Annotated[
        Optional[str], typer.Option("--sigma-grid", help="Sigma grid as start:stop:step (default 0.01:10:0.01)")
    ] = None,
    epsilon: EpsilonOption = None,
    epsilon_quantile: EpsilonQuantileOption = None,
    k: KOption = None,
    seed: SeedOption = None,
    restarts: RestartsOption = None,
    phi_mode: PhiModeOption = None,
    eta_smoothing: EtaSmoothingOption = None,
    out_dir: OutDirOption = None,
    output_format: FormatOption = None,
    config_path: ConfigOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Sweeps sigma over a grid and keeps the value with the best ARI."""

    _configure_logging(verbose)
    try:
        grid = parse_sigma_grid(sigma_grid) if sigma_grid else None
        experiment = _build_config(
            config_path,
            dataset,
            family,
            epsilon,
            epsilon_quantile,
            methods=method,
            sigma_grid={"start": grid.start, "stop": grid.stop, "step": grid.step} if grid else None,
            k=k,
            seed=seed,
            restarts=restarts,
            phi_mode=phi_mode,
            eta_smoothing=eta_smoothing,
            out_dir=out_dir,
            format=output_format,
        )
        _report(experiment)
    except CLI_ERRORS as err:
        raise _fail(err) from err


@app.command()
def bench(
    config_path: ConfigOption = None,
    method: MethodOption = None,
    seed: SeedOption = None,
    restarts: RestartsOption = None,
    out_dir: OutDirOption = None,
    output_format: FormatOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Reproduces the benchmark tables for every dataset and method of an experiment file."""

    _configure_logging(verbose)
    try:
        if config_path is None:
            raise ValueError("--config is required for `bench`.")
        experiment = _build_config(
            config_path,
            None,
            "shape",
            None,
            None,
            methods=method,
            seed=seed,
            restarts=restarts,
            out_dir=out_dir,
            format=output_format,
        )
        _report(experiment)
    except CLI_ERRORS as err:
        raise _fail(err) from err


@app.command()
def plot(
    dataset: Annotated[Path, typer.Option("--dataset", "-d", help="Dataset file the labels belong to")],
    labels: Annotated[Path, typer.Option("--labels", "-l", help="Labels CSV written by cluster/sweep/bench")],
    out: Annotated[Path, typer.Option("--out", "-o", help="Output SVG file")],
    family: FamilyOption = "shape",
    verbose: VerboseOption = False,
) -> None:
    """Draws a 2-D dataset colored by previously saved predicted labels."""

    _configure_logging(verbose)
    try:
        points = load_dataset(DatasetSpec(path=str(dataset), family=family))
        predicted, _ = load_labels_csv(labels)
        emit_scatter_plot(points, predicted, out)
        typer.echo(f"Plot saved to {out}")
    except CLI_ERRORS as err:
        raise _fail(err) from err


if __name__ == "__main__":
    app()
