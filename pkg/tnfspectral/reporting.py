import json
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

import matplotlib as mpl
import numpy as np
import pandas as pd
from loguru import logger
from matplotlib import colormaps
from matplotlib.colors import to_hex
from matplotlib.figure import Figure

from tnfspectral.datasets import LabeledDataset

if TYPE_CHECKING:
    from tnfspectral.experiment import ResultRecord
    from tnfspectral.pipeline import SweepResult

METRICS = ("ari", "nmi", "ce")
RESULTS_STEM = "results"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"
    MARKDOWN = "markdown"

    def __str__(self) -> str:
        """
        String representation of the output format.

        Returns:
            Format name as a lower-case string.

        """
        return self.value

    @property
    def suffix(self) -> str:
        """File suffix of the results table."""
        return ".md" if self is OutputFormat.MARKDOWN else f".{self.value}"


# ---------------------------------------------- Tables ----------------------------------------------


def metric_tables(records: list["ResultRecord"]) -> dict[str, pd.DataFrame]:
    """
    Pivots the records into one table per metric: methods as rows, datasets as columns.

    Rows and columns keep the order in which methods and datasets first appear in the records.

    Args:
        records: Result records.

    Returns:
        Mapping metric name -> DataFrame.

    Raises:
        ValueError: If two records share the same method and dataset.

    """

    frame = pd.DataFrame([record.to_dict() for record in records])
    if frame.duplicated(["method", "dataset"]).any():
        raise ValueError("Records contain duplicate (method, dataset) cells; give the datasets distinct names.")
    methods = list(dict.fromkeys(frame["method"]))
    datasets = list(dict.fromkeys(frame["dataset"]))

    return {
        metric: frame.pivot(index="method", columns="dataset", values=metric).reindex(index=methods, columns=datasets)
        for metric in METRICS
    }


def emit_table(records: list["ResultRecord"], format: OutputFormat | str, out_dir: str | Path) -> Path:
    """
    Writes the result tables to `out_dir/results.<csv|json|md>`.

    - csv: the per-metric tables stacked, with a leading `metric` column;
    - json: `{"records": [...], "tables": {metric: {method: {dataset: value}}}}`;
    - markdown: one section per metric.

    Wall time is kept out of the csv and markdown tables, so reruns with the same seed produce identical files in
    those two formats. The json records carry `wall_time` and differ between runs.

    Args:
        records: Result records, at least one.
        format: Output format.
        out_dir: Output folder, created if needed.

    Returns:
        Path of the written file.

    Raises:
        ValueError: If there are no records.

    """

    if not records:
        raise ValueError("Nothing to report: no result records.")

    output_format = OutputFormat(format)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{RESULTS_STEM}{output_format.suffix}"
    tables = metric_tables(records)

    if output_format is OutputFormat.CSV:
        stacked = pd.concat(tables, names=["metric", "method"])
        stacked.to_csv(path, float_format="%.4f")
    elif output_format is OutputFormat.JSON:
        payload = {
            "records": [record.to_dict() for record in records],
            "tables": {metric: table.to_dict(orient="index") for metric, table in tables.items()},
        }
        path.write_text(json.dumps(payload, indent=2))
    else:
        sections = [f"## {metric.upper()}\n\n{table.to_markdown(floatfmt='.4f')}\n" for metric, table in tables.items()]
        path.write_text("\n".join(sections))

    logger.info(f"Wrote {len(records)} record(s) to `{path}`")
    return path


def load_results_json(path: str | Path) -> list[dict[str, Any]]:
    """Reads back the records of a `results.json` file as dictionaries."""
    return json.loads(Path(path).read_text())["records"]


# ------------------------------------------ Labels & Sweeps ------------------------------------------


def save_labels_csv(predicted: np.ndarray, truth: np.ndarray | None, path: str | Path) -> None:
    """
    Writes predicted and ground-truth labels as `index,predicted,truth`.

    Args:
        predicted: Predicted labels.
        truth: Ground-truth labels, or None (the column is left empty).
        path: Output file; parent folders are created.

    """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"predicted": predicted, "truth": truth if truth is not None else pd.NA})
    frame.to_csv(path, index_label="index")


def load_labels_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    """
    Reads a labels file written by `save_labels_csv`.

    Args:
        path: Labels CSV file.

    Returns:
        (predicted, truth); truth is None when the file has no ground truth.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the columns are missing or the index is not 0..n-1.

    """

    path = Path(path)
    if not path.is_file():
        logger.error(f"Labels file `{path}` is not found")
        raise FileNotFoundError(f"Labels file `{path}` is not found.")

    frame = pd.read_csv(path)
    missing = {"index", "predicted", "truth"} - set(frame.columns)
    if missing:
        raise ValueError(f"Labels file `{path}` misses column(s) {sorted(missing)}.")
    if not np.array_equal(frame["index"].to_numpy(), np.arange(len(frame))):
        raise ValueError(f"Labels file `{path}` must list indices 0..n-1 in order.")

    predicted = frame["predicted"].to_numpy(dtype=np.int64)
    truth = None if frame["truth"].isna().all() else frame["truth"].to_numpy(dtype=np.int64)
    return predicted, truth


def save_sweep_csv(sweep: "SweepResult", path: str | Path) -> None:
    """Writes every evaluated (sigma, score) pair of a sweep as `sigma,score`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(sweep.scores, columns=["sigma", "score"]).to_csv(path, index=False)


# ----------------------------------------------- Plots -----------------------------------------------


def label_colors(labels: np.ndarray) -> dict[int, str]:
    """
    Assigns a distinct color to every label value, in ascending label order.

    Up to 10 labels use `tab10`, up to 20 `tab20`; beyond that colors are spread evenly over `turbo`.

    Args:
        labels: Label vector.

    Returns:
        Mapping label -> hex color.

    """

    unique = np.unique(labels)
    if unique.size <= 10:
        colors = colormaps["tab10"](np.arange(unique.size))
    elif unique.size <= 20:
        colors = colormaps["tab20"](np.arange(unique.size))
    else:
        colors = colormaps["turbo"](np.linspace(0.0, 1.0, unique.size))

    return {int(label): to_hex(color) for label, color in zip(unique, colors, strict=True)}


def emit_scatter_plot(dataset: LabeledDataset, labels: np.ndarray, out: str | Path) -> Path:
    """
    Renders a 2-D dataset colored by `labels` as an SVG file.

    Every label gets its own scatter group (SVG id `cluster-<label>`). Points are drawn by matplotlib as one
    `<use>` marker per point referencing a shared marker path, not as `<circle>` elements. The hash salt is fixed
    and no date is embedded, so identical inputs give identical bytes.

    Args:
        dataset: 2-D dataset.
        labels: One label per point.
        out: Output SVG path; parent folders are created.

    Returns:
        The output path.

    Raises:
        ValueError: If the dataset is not 2-D or the labels do not match the points.

    """

    if dataset.n_features != 2:
        raise ValueError(f"Scatter plots need 2-D points, `{dataset.name}` has {dataset.n_features} features.")
    labels = np.asarray(labels)
    if labels.shape != (dataset.n_points,):
        raise ValueError(f"Expected {dataset.n_points} labels, got shape {labels.shape}.")

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)

    with mpl.rc_context({"svg.hashsalt": "tnfspectral", "svg.fonttype": "path"}):
        figure = Figure(figsize=(5, 5))
        ax = figure.add_subplot()
        for label, color in label_colors(labels).items():
            members = dataset.points[labels == label]
            ax.scatter(members[:, 0], members[:, 1], s=12, color=color, label=str(label), gid=f"cluster-{label}")
        ax.set_title(dataset.name)
        ax.set_aspect("equal", adjustable="datalim")
        figure.savefig(out, format="svg", metadata={"Date": None})

    logger.debug(f"Saved scatter plot to `{out}`")
    return out
