"""Shared fixtures: one dataset and one trained model set per session.

The NN training run takes a few seconds, so everything expensive is
session-scoped and the individual test files treat the fixtures as read-only.
"""

import numpy as np
import pytest

from sicancel.cancellers import fit_linear, fit_poly
from sicancel.config import split_bounds
from sicancel.metrics import CALIBRATION_SAMPLES
from sicancel.network import TrainConfig, train_nn
from sicancel.signals import OfdmConfig, default_chain, make_dataset, write_dataset

MEMORY_LEN = 13
MAX_ORDER = 7
N_HIDDEN = 18


@pytest.fixture(scope="session")
def dataset():
    return make_dataset(OfdmConfig(), default_chain(), seed=1)


@pytest.fixture(scope="session")
def dataset_path(dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "default.bin"
    write_dataset(path, *dataset)
    return str(path)


@pytest.fixture(scope="session")
def splits(dataset):
    x, y = dataset
    xs, ys = x.samples, y.samples
    train_end, eval_start = split_bounds(xs.size)
    return {
        "x_train": xs[:train_end],
        "y_train": ys[:train_end],
        "x_eval": xs[eval_start:],
        "y_eval": ys[eval_start:],
    }


@pytest.fixture(scope="session")
def x_calib(splits):
    return splits["x_train"][:CALIBRATION_SAMPLES]


@pytest.fixture(scope="session")
def linear_model(splits):
    return fit_linear(splits["x_train"], splits["y_train"], MEMORY_LEN)


@pytest.fixture(scope="session")
def poly_model(splits):
    return fit_poly(splits["x_train"], splits["y_train"], MEMORY_LEN, MAX_ORDER)


@pytest.fixture(scope="session")
def nn_model(splits):
    model, _ = train_nn(
        splits["x_train"], splits["y_train"], MEMORY_LEN, N_HIDDEN, cfg=TrainConfig()
    )
    return model


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
