from .labeled_dataset import DatasetFamily, LabeledDataset, Preprocessing
from .dataset_loader import load_mnist_idx, load_shape_csv, load_uci_csv, normalize, save_shape_csv
