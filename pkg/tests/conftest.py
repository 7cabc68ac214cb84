import numpy as np
import pytest

from satdjscc.channel import LooParameters, loo_cdf


def ks_statistic(samples, cdf_values, grid, n):
    """Two-sided KS distance between an empirical sample and exact CDF values.

    `grid` must be sorted; `cdf_values` are the exact CDF at the grid points.
    """
    sorted_samples = np.sort(samples)
    emp_right = np.searchsorted(sorted_samples, grid, side="right") / n
    emp_left = np.searchsorted(sorted_samples, grid, side="left") / n
    return max(
        float(np.abs(emp_right - cdf_values).max()),
        float(np.abs(emp_left - cdf_values).max()),
    )


def loo_ks(params: LooParameters, samples, points=2000):
    """KS distance of |h| samples against the quadrature CDF oracle."""
    magnitudes = np.sort(np.abs(samples))
    n = magnitudes.size
    step = max(1, n // points)
    grid = magnitudes[::step]
    exact = loo_cdf(params, grid)
    return ks_statistic(magnitudes, exact, grid, n)


@pytest.fixture(scope="session")
def toy_images():
    from satdjscc.data import synth_dataset
    images = synth_dataset(7, 8, (16, 16, 3))
    return np.stack([image.to_hwc() for image in images])
