import numpy as np
import pytest

from fmest.data import Grid, matrix_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)


def random_partial_dataset(rng, n=30, J=50, group="0", missing=0.3):
    """Gaussian curves with iid holes; every curve and column kept nonempty."""
    grid = Grid.uniform(J)
    values = rng.normal(size=(n, J)) * 2.0 + 1.5
    mask = rng.random((n, J)) >= missing
    # repair empty rows/columns so the dataset is always valid
    for i in np.flatnonzero(~mask.any(axis=1)):
        mask[i, rng.integers(0, J)] = True
    for j in np.flatnonzero(~mask.any(axis=0)):
        mask[rng.integers(0, n), j] = True
    return matrix_dataset(grid, values, mask, group=group)
