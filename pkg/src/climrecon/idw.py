"""Inverse distance weighting over the k nearest reconstruction nodes.

The prediction is the weight-normalized average of the k nearest node
values, with weights d**(-power). A target closer than ``ZERO_DISTANCE_TOL``
to a node receives that node's value directly, which keeps the method an
interpolator (zero error at nodes) and avoids the 1/0 weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import ClimatePointCloud, CoordinateSystem, QueryPoint
from .spatial import KdIndex

K_NEIGHBOURS_BOUNDS = (1, 50)
POWER_BOUNDS = (1e-7, 5.0)
ZERO_DISTANCE_TOL = 1e-12


@dataclass(frozen=True)
class IdwParams:
    k_neighbours: int
    power: float

    def __post_init__(self) -> None:
        if not (K_NEIGHBOURS_BOUNDS[0] <= self.k_neighbours <= K_NEIGHBOURS_BOUNDS[1]):
            raise ValueError(f"k_neighbours outside {K_NEIGHBOURS_BOUNDS}: {self.k_neighbours}")
        if not (POWER_BOUNDS[0] <= self.power <= POWER_BOUNDS[1]):
            raise ValueError(f"power outside {POWER_BOUNDS}: {self.power}")


def _as_target_arrays(targets) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(targets, tuple) and len(targets) == 2:
        return (
            np.ascontiguousarray(targets[0], dtype=np.float64),
            np.ascontiguousarray(targets[1], dtype=np.float64),
        )
    lats = np.asarray([t.lat for t in targets], dtype=np.float64)
    lons = np.asarray([t.lon for t in targets], dtype=np.float64)
    return lats, lons


def idw_reconstruct(
    pc: ClimatePointCloud,
    idx: KdIndex,
    params: IdwParams,
    targets: Sequence[QueryPoint] | tuple[np.ndarray, np.ndarray],
    cs: CoordinateSystem,
) -> np.ndarray:
    """Predicted values at ``targets``; targets may be a list of QueryPoint
    or a (lats, lons) array pair."""
    qlats, qlons = _as_target_arrays(targets)
    if qlats.size == 0:
        raise ValueError("targets must be non-empty")
    neigh_idx, neigh_dist = idx.knn_many(qlats, qlons, params.k_neighbours, cs)
    neigh_vals = pc.values[neigh_idx]

    # weights computed relative to the nearest distance so huge powers on
    # tiny distances cannot overflow: (d_min / d_i) ** power <= 1
    d = neigh_dist
    dmin = d[:, :1]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (dmin / d) ** params.power
    w = np.where(d <= 0.0, 1.0, w)  # only possible when dmin == 0 too
    pred = np.einsum("ij,ij->i", neigh_vals, w) / w.sum(axis=1)

    # a target sitting on a node gets the node value exactly; rows are sorted
    # by (distance, index), so column 0 is the lowest-index coincident node
    on_node = neigh_dist[:, 0] < ZERO_DISTANCE_TOL
    if np.any(on_node):
        pred = np.where(on_node, neigh_vals[:, 0], pred)
    return pred
