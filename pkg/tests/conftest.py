import os
from pathlib import Path

import numpy as np
import pytest

from sirus import Dataset, load_dataset

DATASETS_DIR = Path(__file__).resolve().parent.parent / "datasets"

# (csv name, response column, categorical columns)
DATASET_SPECS = {
    "diabetes": ("diabetes.csv", "progression", ()),
    "machine": ("machine.csv", "PRP", ()),
    "ozone": ("ozone.csv", "ozone", ()),
    "bones": ("bones.csv", "spnbmd", ("gender",)),
}


def dataset_or_skip(name: str) -> Dataset:
    """Load a benchmark dataset, skipping when its file is absent.

    The build environment has no network access; scripts/fetch_datasets.py
    documents how to materialize the missing files where downloads work.
    """
    csv_name, response, categorical = DATASET_SPECS[name]
    path = DATASETS_DIR / csv_name
    if not path.exists():
        pytest.skip(
            f"dataset file {path} not present (no network in this environment; "
            "run scripts/fetch_datasets.py to materialize it)"
        )
    return load_dataset(path, response_column=response,
                        categorical_columns=categorical)


@pytest.fixture(scope="session")
def diabetes() -> Dataset:
    return dataset_or_skip("diabetes")


@pytest.fixture()
def toy_data() -> Dataset:
    """Small dataset with one dominant step signal and noise features."""
    rng = np.random.default_rng(42)
    n = 160
    x = rng.normal(size=(n, 3))
    y = 5.0 * (x[:, 0] < 0.4) + 0.05 * rng.normal(size=n)
    return Dataset(x=x, y=y, feature_names=("a", "b", "c"))


@pytest.fixture(autouse=True)
def _single_worker_default(monkeypatch):
    """Keep unit tests serial unless a test opts in to worker processes."""
    if "SIRUS_THREADS" not in os.environ:
        monkeypatch.setenv("SIRUS_THREADS", "1")
