import numpy as np
import pytest

from spectralforge.core import SpectralMatrix, TargetMatrix, WavenumberAxis


@pytest.fixture
def small_dataset():
    """12 samples x 20 features with random intensities and targets."""
    rng = np.random.default_rng(1234)
    axis = WavenumberAxis(np.linspace(1800.0, 600.0, 20))
    rows = rng.uniform(1.0, 5.0, (12, 20))
    ids = tuple(f"S{i:02d}" for i in range(12))
    x = SpectralMatrix(axis, rows, ids)
    y = TargetMatrix(rng.uniform([70, 10, 2], [80, 20, 8], (12, 3)))
    return x, y


def make_matrix(rows, start=1000.0, end=500.0):
    rows = np.asarray(rows, dtype=np.float64)
    axis = WavenumberAxis(np.linspace(start, end, rows.shape[1]))
    return SpectralMatrix(axis, rows, tuple(f"r{i}" for i in range(rows.shape[0])))
