import gzip
import struct
from collections.abc import Iterable
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from tnfspectral.datasets.labeled_dataset import LabeledDataset, Preprocessing

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# ---------------------------------------- Shape datasets ----------------------------------------


def _split_shape_line(line: str) -> list[str]:
    if "," in line:
        return [token.strip() for token in line.split(",")]
    return line.split()


def load_shape_csv(path: str | Path) -> LabeledDataset:
    """
    Loads a 2D shape dataset (Jain, Flame, Spiral, ...) stored as `x<sep>y<sep>label` lines.

    The separator is either a comma or any whitespace. Lines starting with `#` and blank lines are ignored.
    Labels are remapped to contiguous 0-based integers in ascending order of the original label values.

    Args:
        path: Path to the text file.

    Returns:
        A LabeledDataset with m = 2 named after the file stem.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If a line cannot be parsed, column counts differ between lines or the file has no data.

    """

    path = Path(path)
    if not path.exists():
        error_msg = f"Shape dataset not found: {path}"
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)

    coordinates, raw_labels = [], []
    n_columns = None

    for line_number, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue

        tokens = _split_shape_line(line)
        if n_columns is None:
            n_columns = len(tokens)
            if n_columns != 3:
                raise ValueError(f"Line {line_number}: expected 3 columns (x, y, label), got {n_columns}.")
        elif len(tokens) != n_columns:
            raise ValueError(f"Line {line_number}: inconsistent column count, expected {n_columns}, got {len(tokens)}.")

        try:
            x, y = float(tokens[0]), float(tokens[1])
            label = float(tokens[2])
        except ValueError as e:
            raise ValueError(f"Line {line_number}: malformed line `{line}`: {e}") from e

        if not label.is_integer():
            raise ValueError(f"Line {line_number}: label `{tokens[2]}` is not an integer.")

        coordinates.append((x, y))
        raw_labels.append(int(label))

    if not coordinates:
        raise ValueError(f"Shape dataset `{path}` contains no data lines.")

    # np.unique returns sorted values, so inverse indices are the ascending 0-based remap
    _, labels = np.unique(np.asarray(raw_labels), return_inverse=True)
    dataset = LabeledDataset(
        points=np.asarray(coordinates, dtype=np.float64),
        labels=labels.astype(np.int64),
        name=path.stem.lower(),
    )
    logger.info(f"Loaded `{dataset.name}` with {dataset.n_points} points and {dataset.k_true} classes")
    return dataset


def save_shape_csv(dataset: LabeledDataset, path: str | Path) -> None:
    """
    Writes a 2D labeled dataset in the shape-CSV format read by `load_shape_csv`.

    Coordinates are written with `repr`, which round-trips float64 values exactly.

    Args:
        dataset: A labeled dataset with two features.
        path: Destination file; parent folders are created when missing.

    Raises:
        ValueError: If the dataset is not 2D or has no labels.

    """

    if dataset.n_features != 2:
        raise ValueError(f"Shape CSV holds 2D points only, but the dataset has {dataset.n_features} features.")
    if dataset.labels is None:
        raise ValueError("Shape CSV requires ground-truth labels.")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    lines = [f"{x!r},{y!r},{label}" for (x, y), label in zip(dataset.points.tolist(), dataset.labels.tolist())]
    path.write_text("\n".join(lines) + "\n")


# ----------------------------------------- UCI datasets -----------------------------------------


def load_uci_csv(path: str | Path, label_column: int = -1, delimiter: str = ",") -> LabeledDataset:
    """
    Loads a UCI table where one column holds the class and all other columns are numeric features.

    Class values (numeric or textual) are mapped to 0-based integers in order of first appearance.

    Args:
        path: Path to the headerless delimited file.
        label_column: Index of the class column; negative values count from the end (Python style).
        delimiter: Field separator.

    Returns:
        A LabeledDataset with the label column removed from the features.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the label column is out of range, a feature cell is non-numeric or the file is empty.

    """

    path = Path(path)
    if not path.exists():
        error_msg = f"UCI dataset not found: {path}"
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)

    try:
        sep = r"\s+" if delimiter.isspace() else delimiter
        table = pd.read_csv(path, header=None, sep=sep, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise ValueError(f"UCI dataset `{path}` is empty.") from e

    n_columns = table.shape[1]
    if not -n_columns <= label_column < n_columns:
        raise ValueError(f"label_column {label_column} is out of range for a table with {n_columns} columns.")
    label_column %= n_columns

    labels, _ = pd.factorize(table[label_column].str.strip(), sort=False)
    features = table.drop(columns=label_column)

    numeric = features.apply(pd.to_numeric, errors="coerce")
    bad_cells = numeric.isna().to_numpy()
    if bad_cells.any():
        row, col = np.argwhere(bad_cells)[0]
        raise ValueError(
            f"Non-numeric feature cell `{features.iat[row, col]}` at row {row + 1}, column {features.columns[col]}."
        )

    dataset = LabeledDataset(
        points=numeric.to_numpy(dtype=np.float64),
        labels=labels.astype(np.int64),
        name=path.stem.lower(),
    )
    logger.info(
        f"Loaded `{dataset.name}` with {dataset.n_points} points, {dataset.n_features} features "
        f"and {dataset.k_true} classes"
    )
    return dataset


# ---------------------------------------- MNIST (IDX files) ----------------------------------------


def _read_idx_bytes(path: Path) -> bytes:
    if not path.exists():
        error_msg = f"IDX file not found: {path}"
        logger.error(error_msg)
        raise FileNotFoundError(error_msg)

    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx_images(path: str | Path) -> np.ndarray:
    """
    Reads an IDX image file (big-endian, magic 0x00000803, dims [n, rows, cols], unsigned bytes).

    Args:
        path: Path to the (optionally gzipped) IDX file.

    Returns:
        A uint8 array of shape (n, rows, cols).

    Raises:
        ValueError: If the magic number or payload size does not match.

    """

    payload = _read_idx_bytes(Path(path))
    if len(payload) < 16:
        raise ValueError(f"IDX image file `{path}` is truncated: header needs 16 bytes, got {len(payload)}.")
    magic, n_images, n_rows, n_cols = struct.unpack(">IIII", payload[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"Magic number mismatch in `{path}`: expected {IDX_IMAGES_MAGIC:#010x}, got {magic:#010x}.")

    pixels = np.frombuffer(payload, dtype=np.uint8, offset=16)
    if pixels.size != n_images * n_rows * n_cols:
        raise ValueError(f"IDX image payload has {pixels.size} bytes, expected {n_images * n_rows * n_cols}.")

    return pixels.reshape(n_images, n_rows, n_cols)


def read_idx_labels(path: str | Path) -> np.ndarray:
    """
    Reads an IDX label file (big-endian, magic 0x00000801, dim [n], unsigned bytes).

    Args:
        path: Path to the (optionally gzipped) IDX file.

    Returns:
        A uint8 array of shape (n,).

    Raises:
        ValueError: If the magic number or payload size does not match.

    """

    payload = _read_idx_bytes(Path(path))
    if len(payload) < 8:
        raise ValueError(f"IDX label file `{path}` is truncated: header needs 8 bytes, got {len(payload)}.")
    magic, n_labels = struct.unpack(">II", payload[:8])
    if magic != IDX_LABELS_MAGIC:
        raise ValueError(f"Magic number mismatch in `{path}`: expected {IDX_LABELS_MAGIC:#010x}, got {magic:#010x}.")

    labels = np.frombuffer(payload, dtype=np.uint8, offset=8)
    if labels.size != n_labels:
        raise ValueError(f"IDX label payload has {labels.size} entries, expected {n_labels}.")

    return labels


def load_mnist_idx(
    images_path: str | Path,
    labels_path: str | Path,
    digits: Iterable[int],
    per_digit: int,
    seed: int | None = None,
) -> LabeledDataset:
    """
    Selects `per_digit` samples of every requested digit from an MNIST IDX pair.

    Without a seed the first `per_digit` occurrences in file order are taken; with a seed they are sampled
    uniformly without replacement (and kept in file order). Points are grouped by ascending digit,
    flattened row-major and scaled to [0, 1].

    Args:
        images_path: IDX image file.
        labels_path: IDX label file.
        digits: Digits to keep, e.g. {3, 5, 8}.
        per_digit: Number of samples per digit.
        seed: Optional sampling seed.

    Returns:
        A LabeledDataset with labels 0..len(digits)-1 in ascending digit order.

    Raises:
        ValueError: On an empty selection, image/label count mismatch or too few samples of a digit.

    """

    digits = sorted(set(int(d) for d in digits))
    if per_digit <= 0 or not digits:
        raise ValueError(f"Empty selection: per_digit={per_digit}, digits={digits}.")

    images = read_idx_images(images_path)
    file_labels = read_idx_labels(labels_path)
    if images.shape[0] != file_labels.shape[0]:
        raise ValueError(f"Image/label count mismatch: {images.shape[0]} images vs {file_labels.shape[0]} labels.")

    rng = np.random.default_rng(seed) if seed is not None else None
    selected = []
    for digit in digits:
        candidates = np.flatnonzero(file_labels == digit)
        if candidates.size < per_digit:
            raise ValueError(f"Insufficient samples for digit {digit}: requested {per_digit}, got {candidates.size}.")
        if rng is None:
            selected.append(candidates[:per_digit])
        else:
            selected.append(np.sort(rng.choice(candidates, size=per_digit, replace=False)))

    indices = np.concatenate(selected)
    points = images[indices].reshape(indices.size, -1).astype(np.float64) / 255.0
    labels = np.repeat(np.arange(len(digits), dtype=np.int64), per_digit)

    dataset = LabeledDataset(points=points, labels=labels, name="mnist_" + "".join(map(str, digits)))
    logger.info(f"Loaded `{dataset.name}` with {per_digit} samples for each of the digits {digits}")
    return dataset


# ---------------------------------------- Preprocessing ----------------------------------------


def normalize(dataset: LabeledDataset, method: Preprocessing | str = Preprocessing.NONE) -> LabeledDataset:
    """
    Rescales every feature column of the dataset.

    - `none`: the dataset is returned as is.
    - `z-score`: zero mean and unit sample standard deviation (ddof=1); constant columns become 0.
    - `min-max`: columns mapped to [0, 1]; constant columns become 0.

    Args:
        dataset: The dataset to rescale. It is not modified.
        method: Preprocessing method.

    Returns:
        A dataset with rescaled points and unchanged labels and name.

    """

    method = Preprocessing(method)
    if method is Preprocessing.NONE:
        return dataset

    points = dataset.points
    # exact test: floating noise in std/ptp of a constant column must not blow it up
    constant = np.ptp(points, axis=0) == 0

    if method is Preprocessing.Z_SCORE:
        centered = points - points.mean(axis=0)
        scale = points.std(axis=0, ddof=1) if dataset.n_points > 1 else np.ones(dataset.n_features)
        scaled = centered / np.where(constant, 1.0, scale)
    else:
        scaled = (points - points.min(axis=0)) / np.where(constant, 1.0, np.ptp(points, axis=0))

    scaled[:, constant] = 0.0
    return LabeledDataset(points=scaled, labels=dataset.labels, name=dataset.name)

