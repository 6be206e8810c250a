"""Core domain types: observation point clouds, coordinate systems, distances.

Every reconstructor consumes a :class:`ClimatePointCloud` (latitude, longitude,
temperature triples) and predicts values at :class:`QueryPoint` locations.
Coordinates are degrees; distances are either planar degree units (Euclidean)
or great-circle kilometres on a sphere (Geographic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0
DUPLICATE_TOL_DEG = 1e-9


class CoordinateSystem(Enum):
    EUCLIDEAN = "euclidean"
    GEOGRAPHIC = "geographic"


class DuplicateCoordinateError(ValueError):
    """Two observations share (lat, lon) within tolerance; kriging systems
    become singular with exact duplicates, so they are rejected early."""


def _check_lat_lon(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise ValueError(f"latitude out of range [-90, 90]: {lat}")
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise ValueError(f"longitude out of range [-180, 180]: {lon}")


@dataclass(frozen=True)
class QueryPoint:
    """A location where the field is reconstructed (no observed value)."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        _check_lat_lon(self.lat, self.lon)


@dataclass(frozen=True)
class ClimatePoint:
    """One station observation: geographic position plus temperature in degC."""

    lat: float
    lon: float
    value: float

    def __post_init__(self) -> None:
        _check_lat_lon(self.lat, self.lon)
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite observation value: {self.value}")


class ClimatePointCloud:
    """Immutable set of observations used as reconstruction nodes.

    Construction validates coordinate bounds, rejects non-finite values and
    rejects pairs of points closer than ``DUPLICATE_TOL_DEG`` in both axes.
    The underlying arrays are read-only and safe to share across workers.
    """

    __slots__ = ("lats", "lons", "values")

    def __init__(self, lats: Sequence[float], lons: Sequence[float], values: Sequence[float]):
        lats = np.ascontiguousarray(lats, dtype=np.float64)
        lons = np.ascontiguousarray(lons, dtype=np.float64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if not (lats.ndim == lons.ndim == values.ndim == 1):
            raise ValueError("lats, lons and values must be 1-D")
        if not (lats.size == lons.size == values.size):
            raise ValueError("lats, lons and values must have equal length")
        if lats.size < 1:
            raise ValueError("a point cloud needs at least one observation")
        if not np.all(np.isfinite(values)):
            raise ValueError("observation values must be finite")
        if not (np.all(np.isfinite(lats)) and np.all(np.isfinite(lons))):
            raise ValueError("coordinates must be finite")
        if lats.min() < -90.0 or lats.max() > 90.0:
            raise ValueError("latitude out of range [-90, 90]")
        if lons.min() < -180.0 or lons.max() > 180.0:
            raise ValueError("longitude out of range [-180, 180]")
        _reject_duplicates(lats, lons)
        for arr in (lats, lons, values):
            arr.setflags(write=False)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):  # immutability guard
        raise AttributeError("ClimatePointCloud is immutable")

    @classmethod
    def from_points(cls, points: Iterable[ClimatePoint]) -> "ClimatePointCloud":
        pts = list(points)
        return cls([p.lat for p in pts], [p.lon for p in pts], [p.value for p in pts])

    @property
    def n(self) -> int:
        return self.lats.size

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[ClimatePoint]:
        for lat, lon, val in zip(self.lats, self.lons, self.values):
            yield ClimatePoint(float(lat), float(lon), float(val))

    def point(self, i: int) -> ClimatePoint:
        return ClimatePoint(float(self.lats[i]), float(self.lons[i]), float(self.values[i]))

    def bounding_box(self) -> tuple[float, float, float, float]:
        """Tight (lat_min, lat_max, lon_min, lon_max) over all nodes."""
        return (
            float(self.lats.min()),
            float(self.lats.max()),
            float(self.lons.min()),
            float(self.lons.max()),
        )


def _reject_duplicates(lats: np.ndarray, lons: np.ndarray) -> None:
    # Hash points into a DUPLICATE_TOL_DEG grid and compare against the
    # 3x3 neighbouring cells so near-boundary pairs are still caught.
    tol = DUPLICATE_TOL_DEG
    cells: dict[tuple[int, int], list[int]] = {}
    ci = np.floor(lats / tol).astype(np.int64)
    cj = np.floor(lons / tol).astype(np.int64)
    for idx in range(lats.size):
        key = (int(ci[idx]), int(cj[idx]))
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for other in cells.get((key[0] + di, key[1] + dj), ()):
                    if abs(lats[idx] - lats[other]) <= tol and abs(lons[idx] - lons[other]) <= tol:
                        raise DuplicateCoordinateError(
                            f"points {other} and {idx} coincide within {tol} degrees: "
                            f"({lats[idx]}, {lons[idx]})"
                        )
        cells.setdefault(key, []).append(idx)


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in km on a sphere of radius ``EARTH_RADIUS_KM``."""
    rlat1 = math.radians(lat1)
    rlat2 = math.radians(lat2)
    dlat = math.radians(lat2 - lat1)
    dlon = math.radians(lon2 - lon1)
    a = math.sin(dlat / 2.0) ** 2 + math.cos(rlat1) * math.cos(rlat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def distance(a: QueryPoint, b: QueryPoint, cs: CoordinateSystem) -> float:
    """Distance between two points: planar degrees or great-circle km."""
    if cs is CoordinateSystem.EUCLIDEAN:
        dlat = a.lat - b.lat
        dlon = a.lon - b.lon
        return math.sqrt(dlat * dlat + dlon * dlon)
    return haversine_km(a.lat, a.lon, b.lat, b.lon)


def bounding_box(pc: ClimatePointCloud) -> tuple[float, float, float, float]:
    return pc.bounding_box()
