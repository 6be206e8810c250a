"""Array-form kd-tree construction shared by both kernel backends.

The tree splits on raw (lat, lon). Interior nodes carry an axis and a split
value; points live only in leaves, as contiguous ranges of ``perm``. Both
backends consume the same arrays, so query results can only differ if a
backend's traversal is wrong (the test suite compares them pairwise and
against a linear scan).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

DEFAULT_LEAF_SIZE = 16


class TreeArrays(NamedTuple):
    lats: np.ndarray        # float64 (n,)
    lons: np.ndarray        # float64 (n,)
    node_axis: np.ndarray   # int32 (nodes,)  0=lat 1=lon, -1 for leaves
    node_split: np.ndarray  # float64 (nodes,)
    node_left: np.ndarray   # int32 (nodes,)  child node id, -1 for leaves
    node_right: np.ndarray  # int32 (nodes,)
    node_start: np.ndarray  # int32 (nodes,)  leaf range into perm
    node_end: np.ndarray    # int32 (nodes,)
    perm: np.ndarray        # int64 (n,) point indices in leaf order
    bbox: np.ndarray        # float64 (4,) lat_min, lat_max, lon_min, lon_max


def build_tree(lats: np.ndarray, lons: np.ndarray, leaf_size: int = DEFAULT_LEAF_SIZE) -> TreeArrays:
    lats = np.ascontiguousarray(lats, dtype=np.float64)
    lons = np.ascontiguousarray(lons, dtype=np.float64)
    n = lats.size
    if n < 1:
        raise ValueError("cannot build a kd-tree over zero points")
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")
    coords = (lats, lons)

    node_axis: list[int] = []
    node_split: list[float] = []
    node_left: list[int] = []
    node_right: list[int] = []
    node_start: list[int] = []
    node_end: list[int] = []
    perm = np.empty(n, dtype=np.int64)
    cursor = 0

    def new_node() -> int:
        node_axis.append(-1)
        node_split.append(0.0)
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_end.append(0)
        return len(node_axis) - 1

    def build(idxs: np.ndarray, depth: int) -> int:
        nonlocal cursor
        node = new_node()
        if idxs.size <= leaf_size:
            node_start[node] = cursor
            perm[cursor:cursor + idxs.size] = idxs
            cursor += idxs.size
            node_end[node] = cursor
            return node
        axis = depth % 2
        # stable sort keeps construction deterministic for tied coordinates
        order = np.argsort(coords[axis][idxs], kind="stable")
        idxs = idxs[order]
        mid = idxs.size // 2
        node_axis[node] = axis
        node_split[node] = float(coords[axis][idxs[mid]])
        node_left[node] = build(idxs[:mid], depth + 1)
        node_right[node] = build(idxs[mid:], depth + 1)
        return node

    build(np.arange(n, dtype=np.int64), 0)
    bbox = np.array([lats.min(), lats.max(), lons.min(), lons.max()], dtype=np.float64)
    return TreeArrays(
        lats=lats,
        lons=lons,
        node_axis=np.asarray(node_axis, dtype=np.int32),
        node_split=np.asarray(node_split, dtype=np.float64),
        node_left=np.asarray(node_left, dtype=np.int32),
        node_right=np.asarray(node_right, dtype=np.int32),
        node_start=np.asarray(node_start, dtype=np.int32),
        node_end=np.asarray(node_end, dtype=np.int32),
        perm=perm,
        bbox=bbox,
    )
