import numpy as np
import pytest

from surgedetect import ar
from surgedetect.types import AnnualSeries

FIXTURES = {
    "hadcrut": "hadcrut_annual.csv",
    "noaa": "noaa_annual.csv",
    "berkeley": "berkeley_annual.txt",
    "nasa": "nasa_annual.csv",
}


def fixture_path(source):
    from importlib import resources

    return resources.files("surgedetect") / "data" / FIXTURES[source]


@pytest.fixture(scope="session")
def hadcrut():
    from surgedetect import dataio

    return dataio.ingest_path(fixture_path("hadcrut"), "hadcrut")


@pytest.fixture(scope="session")
def all_fixture_series():
    from surgedetect import dataio

    return {name: dataio.ingest_path(fixture_path(name), name)
            for name in FIXTURES}


@pytest.fixture
def rng():
    return np.random.default_rng(20230817)


def make_joinpoint(n, tau, beta1, beta2, alpha=0.0, noise=None):
    """Synthetic joinpoint series: continuous trend plus optional noise."""
    t = np.arange(1, n + 1, dtype=float)
    y = alpha + beta1 * t + (beta2 - beta1) * np.maximum(t - tau, 0.0)
    if noise is not None:
        y = y + noise
    return y


def ar1_path(phi, sigma, n, seed, stream=0):
    return ar.simulate_ar1(ar.ArModel((phi,), sigma), n, ar.rng_stream(seed, stream))


@pytest.fixture
def annual(rng):
    return AnnualSeries(1970, rng.standard_normal(54) * 0.1 + 0.3, label="test")
