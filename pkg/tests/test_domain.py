import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climrecon.domain import (
    EARTH_RADIUS_KM,
    ClimatePoint,
    ClimatePointCloud,
    CoordinateSystem,
    DuplicateCoordinateError,
    QueryPoint,
    bounding_box,
    distance,
)

EUC = CoordinateSystem.EUCLIDEAN
GEO = CoordinateSystem.GEOGRAPHIC


class TestDistance:
    def test_euclidean_345(self):
        assert distance(QueryPoint(0, 0), QueryPoint(3, 4), EUC) == pytest.approx(5.0, abs=1e-12)

    def test_geographic_identity(self):
        assert distance(QueryPoint(0, 0), QueryPoint(0, 0), GEO) == 0.0

    def test_geographic_antipodal(self):
        # haversine by hand: dlat=0, dlon=pi -> a = sin^2(pi/2) = 1,
        # c = 2 asin(1) = pi, so d = pi * R
        expected = math.pi * EARTH_RADIUS_KM
        assert distance(QueryPoint(0, 0), QueryPoint(0, 180), GEO) == pytest.approx(
            expected, abs=1e-9
        )

    def test_quarter_circle(self):
        # pole to equator = R * pi / 2
        assert distance(QueryPoint(90, 0), QueryPoint(0, 0), GEO) == pytest.approx(
            EARTH_RADIUS_KM * math.pi / 2, abs=1e-9
        )

    @pytest.mark.parametrize("cs", [EUC, GEO])
    def test_metric_properties_on_random_triples(self, cs, rng):
        for _ in range(200):
            pts = [
                QueryPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)))
                for _ in range(3)
            ]
            a, b, c = pts
            dab = distance(a, b, cs)
            dba = distance(b, a, cs)
            assert dab == pytest.approx(dba, abs=1e-9)
            assert dab >= 0
            assert distance(a, a, cs) == 0.0
            assert dab <= distance(a, c, cs) + distance(c, b, cs) + 1e-9


class TestPointValidation:
    def test_lat_out_of_range(self):
        with pytest.raises(ValueError):
            ClimatePoint(91.0, 0.0, 1.0)

    def test_lon_out_of_range(self):
        with pytest.raises(ValueError):
            QueryPoint(0.0, -180.5)

    def test_nan_value_rejected(self):
        with pytest.raises(ValueError):
            ClimatePoint(0.0, 0.0, float("nan"))

    def test_inf_value_rejected(self):
        with pytest.raises(ValueError):
            ClimatePointCloud([0.0], [0.0], [np.inf])


class TestCloud:
    def test_duplicate_coordinates_rejected(self):
        with pytest.raises(DuplicateCoordinateError):
            ClimatePointCloud([1.0, 2.0, 1.0], [3.0, 4.0, 3.0], [0.0, 1.0, 2.0])

    def test_near_duplicate_within_tolerance_rejected(self):
        with pytest.raises(DuplicateCoordinateError):
            ClimatePointCloud([1.0, 1.0 + 5e-10], [3.0, 3.0], [0.0, 1.0])

    def test_distinct_points_accepted(self):
        pc = ClimatePointCloud([1.0, 1.0 + 1e-6], [3.0, 3.0], [0.0, 1.0])
        assert pc.n == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ClimatePointCloud([], [], [])

    def test_arrays_read_only(self):
        pc = ClimatePointCloud([1.0], [2.0], [3.0])
        with pytest.raises(ValueError):
            pc.lats[0] = 9.0


class TestBoundingBox:
    def test_singleton(self):
        pc = ClimatePointCloud([0.0], [0.0], [1.0])
        assert bounding_box(pc) == (0.0, 0.0, 0.0, 0.0)

    def test_two_points(self):
        pc = ClimatePointCloud([1.0, 3.0], [2.0, -1.0], [0.0, 0.0])
        assert bounding_box(pc) == (1.0, 3.0, -1.0, 2.0)

    def test_random_points_inside_box(self, rng):
        lats = rng.uniform(-5, 5, 100)
        lons = rng.uniform(-5, 5, 100)
        pc = ClimatePointCloud(lats, lons, np.zeros(100))
        lat_min, lat_max, lon_min, lon_max = bounding_box(pc)
        assert -5 <= lat_min and lat_max <= 5
        assert -5 <= lon_min and lon_max <= 5
        assert np.all((lats >= lat_min) & (lats <= lat_max))
        assert np.all((lons >= lon_min) & (lons <= lon_max))
        # tightness: extremes are attained
        assert lat_min in lats and lat_max in lats


@settings(max_examples=50, deadline=None)
@given(
    lat1=st.floats(-90, 90), lon1=st.floats(-180, 180),
    lat2=st.floats(-90, 90), lon2=st.floats(-180, 180),
)
def test_distance_symmetry_property(lat1, lon1, lat2, lon2):
    a, b = QueryPoint(lat1, lon1), QueryPoint(lat2, lon2)
    for cs in (EUC, GEO):
        assert distance(a, b, cs) == pytest.approx(distance(b, a, cs), abs=1e-9)
        assert distance(a, b, cs) >= 0.0
