import numpy as np
import pytest

from fgfpca import FunctionalDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def make_dataset(values, family="binomial", cyclic=False, grid=None):
    values = np.asarray(values, dtype=float)
    N, J = values.shape
    if grid is None:
        grid = np.linspace(0.0, 1.0, J)
    return FunctionalDataset(
        subject_ids=tuple(range(1, N + 1)),
        grid=grid,
        values=values,
        family=family,
        cyclic=cyclic,
    )


@pytest.fixture
def dataset_factory():
    return make_dataset
