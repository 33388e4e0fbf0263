import dataclasses
import json
import struct

import numpy as np
import pytest

from tnfspectral.datasets import load_mnist_idx, save_shape_csv
from tnfspectral.experiment import (
    DEFAULT_METHODS,
    DatasetSpec,
    ExperimentConfig,
    ExperimentConfigError,
    load_dataset,
    load_experiment_config,
    run,
)
from tnfspectral.metrics import adjusted_rand_index
from tnfspectral.neighborhood_graph import pairwise_distances, suggest_epsilon
from tnfspectral.reporting import load_labels_csv, load_results_json


@pytest.fixture
def blobs_file(tmp_path, two_blobs):
    path = tmp_path / "data" / "blobs.txt"
    save_shape_csv(two_blobs, path)
    return path


@pytest.fixture
def mnist_pair(tmp_path):
    """Ten 2x2 IDX images, image i filled with 10 * i, labels cycling 0, 8, 3."""
    images = np.stack([np.full((2, 2), 10 * i, dtype=np.uint8) for i in range(10)])
    labels = np.array([0, 8, 3, 0, 8, 3, 0, 8, 3, 0], dtype=np.uint8)
    images_path, labels_path = tmp_path / "images-idx3-ubyte", tmp_path / "labels-idx1-ubyte"
    images_path.write_bytes(struct.pack(">IIII", 0x803, 10, 2, 2) + images.tobytes())
    labels_path.write_bytes(struct.pack(">II", 0x801, 10) + labels.tobytes())
    return images_path, labels_path


@pytest.fixture
def write_config(tmp_path):
    def write(payload, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return path

    return write


def gaussian_experiment(blobs_file, out_dir, **kwargs):
    payload = {
        "datasets": [{"path": str(blobs_file)}],
        "methods": ["gaussian"],
        "sigma_grid": {"start": 1.0, "stop": 1.0, "step": 1.0},
        "restarts": 3,
        "workers": 2,
        "out_dir": str(out_dir),
    }
    return load_experiment_config(overrides={**payload, **kwargs})


class TestLoadExperimentConfig:
    def test_defaults(self):
        experiment = load_experiment_config()
        assert isinstance(experiment, ExperimentConfig)
        assert experiment.methods == DEFAULT_METHODS
        assert "composed" not in experiment.methods
        assert len(experiment.grid) == 1000
        assert experiment.datasets == []

    def test_file_and_overrides(self, write_config, blobs_file):
        path = write_config({"datasets": [{"path": str(blobs_file), "epsilon": 0.5}], "seed": 3, "k": 2})

        experiment = load_experiment_config(path, overrides={"seed": 9, "k": None})

        assert experiment.seed == 9
        assert experiment.k == 2
        assert isinstance(experiment.datasets[0], DatasetSpec)
        assert experiment.datasets[0].epsilon == 0.5
        assert experiment.datasets[0].family == "shape"

    def test_affinity_params(self):
        experiment = load_experiment_config(overrides={"eta_smoothing": True, "log_base": "10"})
        assert experiment.affinity_params == {"eta_smoothing": True, "log_base": "10", "self_tuning_k": 7}

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="is not found"):
            load_experiment_config(tmp_path / "missing.json")

    @pytest.mark.parametrize(
        ("payload", "message"),
        [
            ({"bogus": 1}, "bogus"),
            ({"seed": "abc"}, "seed"),
            ({"methods": []}, "methods: must not be empty"),
            ({"methods": ["gaussian", "laplace"]}, r"methods\[1\]: unknown value `laplace`"),
            ({"sigma_grid": {"start": 0.0}}, "sigma_grid: "),
            ({"restarts": 0}, "restarts: must be at least 1"),
            ({"seed": -2}, "seed: must be nonnegative"),
            ({"phi_mode": "triangles"}, "phi_mode: unknown value"),
            ({"format": "xlsx"}, "format: unknown value"),
            ({"log_base": "3"}, "log_base: Unsupported log base"),
            ({"datasets": [{"path": "missing.txt"}]}, r"datasets\[0\].path: file `missing.txt` does not exist"),
        ],
    )
    def test_invalid_config(self, write_config, payload, message):
        with pytest.raises(ExperimentConfigError, match=message):
            load_experiment_config(write_config(payload))

    def test_epsilon_sources_are_exclusive(self, blobs_file):
        datasets = [{"path": str(blobs_file), "epsilon": 0.5, "epsilon_quantiles": [0.1, 0.2]}]
        with pytest.raises(ExperimentConfigError, match=r"datasets\[0\]: set only one of"):
            load_experiment_config(overrides={"datasets": datasets})

    def test_quantile_range(self, blobs_file):
        datasets = [{"path": str(blobs_file), "epsilon_quantiles": [0.1, 1.5]}]
        with pytest.raises(ExperimentConfigError, match=r"datasets\[0\].epsilon_quantile: must be in"):
            load_experiment_config(overrides={"datasets": datasets})

    def test_sample_seed_from_config(self, mnist_pair):
        images_path, labels_path = mnist_pair
        entry = {
            "path": str(images_path),
            "family": "mnist",
            "labels_path": str(labels_path),
            "digits": [0, 8],
            "per_digit": 2,
        }

        assert load_experiment_config(overrides={"datasets": [entry]}).datasets[0].sample_seed is None
        seeded = load_experiment_config(overrides={"datasets": [{**entry, "sample_seed": 5}]})
        assert seeded.datasets[0].sample_seed == 5
        with pytest.raises(ExperimentConfigError, match=r"datasets\[0\].sample_seed: must be nonnegative"):
            load_experiment_config(overrides={"datasets": [{**entry, "sample_seed": -1}]})

    def test_mnist_needs_labels_file(self, blobs_file):
        datasets = [{"path": str(blobs_file), "family": "mnist", "digits": [0, 1], "per_digit": 5}]
        with pytest.raises(ExperimentConfigError, match=r"datasets\[0\].labels_path"):
            load_experiment_config(overrides={"datasets": datasets})


class TestLoadDataset:
    def test_rename_and_preprocessing(self, blobs_file):
        dataset = load_dataset(DatasetSpec(path=str(blobs_file), name="Renamed", preprocessing="min-max"))
        assert dataset.name == "Renamed"
        assert dataset.points.min() == 0.0
        assert dataset.points.max() == 1.0

    def test_uci_defaults_to_z_score(self, tmp_path):
        path = tmp_path / "table.data"
        path.write_text("1.0,10.0,a\n2.0,20.0,b\n3.0,30.0,a\n")
        dataset = load_dataset(DatasetSpec(path=str(path), family="uci"))
        np.testing.assert_allclose(dataset.points.mean(axis=0), 0.0, atol=1e-12)

    def test_mnist_without_sample_seed_keeps_file_order(self, mnist_pair):
        images_path, labels_path = mnist_pair
        spec = DatasetSpec(
            path=str(images_path), family="mnist", labels_path=str(labels_path), digits=[8, 0], per_digit=2
        )

        dataset = load_dataset(spec)

        # digit 0 sits at file positions 0 and 3, digit 8 at 1 and 4
        np.testing.assert_allclose(dataset.points[:, 0] * 255, [0, 30, 10, 40])
        np.testing.assert_array_equal(dataset.labels, [0, 0, 1, 1])

    def test_mnist_sample_seed_is_forwarded(self, mnist_pair):
        images_path, labels_path = mnist_pair
        spec = DatasetSpec(
            path=str(images_path),
            family="mnist",
            labels_path=str(labels_path),
            digits=[0, 3],
            per_digit=2,
            sample_seed=4,
        )

        dataset = load_dataset(spec)

        expected = load_mnist_idx(images_path, labels_path, [0, 3], 2, seed=4)
        np.testing.assert_array_equal(dataset.points, expected.points)


class TestRun:
    def test_two_blobs(self, blobs_file, tmp_path):
        out_dir = tmp_path / "out"
        records = run(gaussian_experiment(blobs_file, out_dir))

        assert len(records) == 1
        record = records[0]
        assert (record.dataset, record.method, record.sigma, record.k) == ("blobs", "gaussian", 1.0, 2)
        assert record.epsilon is None
        assert record.ari == 1.0
        assert record.nmi == 1.0
        assert record.ce == 0.0

        assert (out_dir / "results.csv").is_file()
        assert (out_dir / "labels" / "blobs_gaussian.csv").is_file()
        assert (out_dir / "sweeps" / "blobs_gaussian.csv").is_file()
        assert (out_dir / "plots" / "blobs_gaussian.svg").is_file()

    def test_labels_reproduce_the_scores(self, blobs_file, tmp_path):
        experiment = gaussian_experiment(blobs_file, tmp_path / "out", methods=["gaussian", "cnn"])
        records = run(experiment)

        for record in records:
            predicted, truth = load_labels_csv(tmp_path / "out" / "labels" / f"blobs_{record.method}.csv")
            assert adjusted_rand_index(predicted, truth) == record.ari

    def test_results_are_byte_identical(self, blobs_file, tmp_path):
        methods = ["gaussian", "tnf1", "self-tuning"]
        run(gaussian_experiment(blobs_file, tmp_path / "first", methods=methods, workers=1))
        run(gaussian_experiment(blobs_file, tmp_path / "second", methods=methods, workers=4))

        for name in ["results.csv", "labels/blobs_tnf1.csv", "plots/blobs_gaussian.svg"]:
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    def test_records_are_reproducible(self, blobs_file, tmp_path):
        methods = ["cnn", "tnf2"]
        first = run(gaussian_experiment(blobs_file, tmp_path / "first", methods=methods, seed=11))
        second = run(gaussian_experiment(blobs_file, tmp_path / "second", methods=methods, seed=11))

        # everything but the wall time
        assert [dataclasses.replace(record, wall_time=0.0) for record in first] == [
            dataclasses.replace(record, wall_time=0.0) for record in second
        ]

    def test_epsilon_quantile_search(self, blobs_file, tmp_path, two_blobs):
        experiment = gaussian_experiment(
            blobs_file,
            tmp_path / "out",
            methods=["tnf2", "gaussian"],
            datasets=[{"path": str(blobs_file), "epsilon_quantiles": [0.3, 0.45]}],
        )
        tnf2, gaussian = run(experiment)

        distances = pairwise_distances(two_blobs)
        assert tnf2.epsilon in {suggest_epsilon(distances, 0.3), suggest_epsilon(distances, 0.45)}
        assert gaussian.epsilon is None

    def test_self_tuning_record(self, blobs_file, tmp_path):
        (record,) = run(gaussian_experiment(blobs_file, tmp_path / "out", methods=["self-tuning"]))
        assert record.sigma is None
        assert record.ari == 1.0

    def test_json_output(self, blobs_file, tmp_path):
        records = run(gaussian_experiment(blobs_file, tmp_path / "out", format="json"))
        assert load_results_json(tmp_path / "out" / "results.json") == [record.to_dict() for record in records]

    def test_needs_datasets(self, tmp_path):
        with pytest.raises(ExperimentConfigError, match="datasets: must not be empty"):
            run(load_experiment_config(overrides={"out_dir": str(tmp_path)}))
