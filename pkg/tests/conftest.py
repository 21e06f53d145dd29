"""Shared model builders for the test suite."""

import numpy as np
import pytest

from marcusfpe import (
    GaussianInitial,
    LevyTriplet,
    ModelSpec,
    NoiseCoefficient,
    get_benchmark,
)


def constant_noise(matrix) -> NoiseCoefficient:
    mat = np.asarray(matrix, float)
    d, n = mat.shape

    def sigma(x):
        return np.broadcast_to(mat, (np.asarray(x).shape[0], d, n)).copy()

    def dsigma(x):
        return np.zeros((np.asarray(x).shape[0], d, n, d))

    return NoiseCoefficient(d, n, sigma, dsigma)


def ou_model(x0_mean=1.0, x0_std=0.5) -> ModelSpec:
    """f = -x, sigma = 1, standard Brownian driver."""
    return ModelSpec(
        drift=lambda x: -np.asarray(x, float),
        noise=constant_noise([[1.0]]),
        driver=LevyTriplet(b=np.zeros(1), A=np.eye(1)),
        x0=GaussianInitial([x0_mean], [x0_std]),
    )


def example1_model(drift, driver, x0) -> ModelSpec:
    bench = get_benchmark("example1")
    return ModelSpec(
        drift=drift,
        noise=bench.noise,
        driver=driver,
        x0=x0,
        closed_inverse=bench.closed.htilde,
        closed_forward=bench.closed.hforward,
    )


def example2_model(driver, x0) -> ModelSpec:
    bench = get_benchmark("example2")
    return ModelSpec(
        drift=bench.default_drift,
        noise=bench.noise,
        driver=driver,
        x0=x0,
        closed_inverse=bench.closed.htilde,
        closed_forward=bench.closed.hforward,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
