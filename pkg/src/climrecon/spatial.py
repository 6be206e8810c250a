"""kd-tree index over reconstruction nodes for exact k-nearest-neighbour
retrieval.

Queries are exact (not approximate) in either coordinate system and break
distance ties by lower node index, so results are reproducible and identical
to a brute-force scan.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .domain import ClimatePointCloud, CoordinateSystem, QueryPoint
from .kernels.tree import DEFAULT_LEAF_SIZE, TreeArrays


class KdIndex:
    """Read-only spatial index over the points of one cloud."""

    __slots__ = ("cloud", "tree")

    def __init__(self, cloud: ClimatePointCloud, tree: TreeArrays):
        self.cloud = cloud
        self.tree = tree

    @property
    def size(self) -> int:
        return self.cloud.n

    def knn(self, q: QueryPoint, k: int, cs: CoordinateSystem) -> list[tuple[int, float]]:
        idx, dist = self.knn_many(
            np.asarray([q.lat]), np.asarray([q.lon]), k, cs
        )
        return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]

    def knn_many(
        self,
        qlats: Sequence[float] | np.ndarray,
        qlons: Sequence[float] | np.ndarray,
        k: int,
        cs: CoordinateSystem,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Batch query: (m, min(k, n)) arrays of node indices and distances,
        each row sorted by (distance, index)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        geographic = cs is CoordinateSystem.GEOGRAPHIC
        return kernels.knn_many(self.tree, qlats, qlons, k, geographic)


def build(pc: ClimatePointCloud, leaf_size: int = DEFAULT_LEAF_SIZE) -> KdIndex:
    """Build the index; deterministic given the cloud's point order."""
    return KdIndex(pc, kernels.build_tree(pc.lats, pc.lons, leaf_size))


def knn(idx: KdIndex, q: QueryPoint, k: int, cs: CoordinateSystem) -> list[tuple[int, float]]:
    return idx.knn(q, k, cs)
