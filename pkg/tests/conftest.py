import numpy as np
import pytest

from climrecon.domain import ClimatePointCloud


def random_cloud(rng: np.random.Generator, n: int, lat_range=(-60.0, 60.0),
                 lon_range=(-170.0, 170.0), value_range=(-20.0, 35.0)) -> ClimatePointCloud:
    return ClimatePointCloud(
        rng.uniform(*lat_range, n),
        rng.uniform(*lon_range, n),
        rng.uniform(*value_range, n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20210816)
