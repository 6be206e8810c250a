"""NumPy reference kernels, used when the compiled extension is unavailable.

kNN here is an exact vectorized linear scan rather than a tree traversal:
for geographic queries especially, a scan is the simplest implementation that
is guaranteed to match brute force exactly (including tie order), which is
the contract both backends are tested against.
"""

from __future__ import annotations

import numpy as np

from .tree import TreeArrays

BACKEND_NAME = "python"

_EARTH_RADIUS_KM = 6371.0
_QUERY_CHUNK = 256


def _haversine_matrix(qlat, qlon, plat, plon):
    """Great-circle km between each query (rows) and each point (cols)."""
    qlat_r = np.radians(qlat)[:, None]
    qlon_r = np.radians(qlon)[:, None]
    plat_r = np.radians(plat)[None, :]
    plon_r = np.radians(plon)[None, :]
    a = (
        np.sin((plat_r - qlat_r) / 2.0) ** 2
        + np.cos(qlat_r) * np.cos(plat_r) * np.sin((plon_r - qlon_r) / 2.0) ** 2
    )
    np.clip(a, 0.0, 1.0, out=a)
    return 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))


def _euclidean_matrix(qlat, qlon, plat, plon, lon_scale=1.0):
    dlat = qlat[:, None] - plat[None, :]
    dlon = (qlon[:, None] - plon[None, :]) * lon_scale
    return np.sqrt(dlat * dlat + dlon * dlon)


def pairwise_distances(alat, alon, blat, blon, geographic: bool, lon_scale: float = 1.0):
    """(len(a), len(b)) distance matrix; ``lon_scale`` stretches the longitude
    axis before Euclidean distance (anisotropy) and is ignored when
    ``geographic`` is set."""
    alat = np.asarray(alat, dtype=np.float64)
    alon = np.asarray(alon, dtype=np.float64)
    blat = np.asarray(blat, dtype=np.float64)
    blon = np.asarray(blon, dtype=np.float64)
    if geographic:
        return _haversine_matrix(alat, alon, blat, blon)
    return _euclidean_matrix(alat, alon, blat, blon, lon_scale)


def knn_many(tree: TreeArrays, qlats, qlons, k: int, geographic: bool):
    """Exact k nearest nodes per query, ties broken by lower node index.

    Returns ``(idx, dist)`` with shape (n_queries, min(k, n)); rows are
    sorted by ascending distance then index.
    """
    qlats = np.atleast_1d(np.asarray(qlats, dtype=np.float64))
    qlons = np.atleast_1d(np.asarray(qlons, dtype=np.float64))
    n = tree.lats.size
    kk = min(int(k), n)
    m = qlats.size
    out_idx = np.empty((m, kk), dtype=np.int64)
    out_dist = np.empty((m, kk), dtype=np.float64)
    for lo in range(0, m, _QUERY_CHUNK):
        hi = min(lo + _QUERY_CHUNK, m)
        dmat = pairwise_distances(qlats[lo:hi], qlons[lo:hi], tree.lats, tree.lons, geographic)
        for r in range(hi - lo):
            row = dmat[r]
            if kk < n:
                # everything <= the k-th smallest value, so tie groups that
                # straddle the cut are ranked by index rather than split
                # arbitrarily by argpartition
                pivot = np.partition(row, kk - 1)[kk - 1]
                cand = np.flatnonzero(row <= pivot)
            else:
                cand = np.arange(n)
            order = np.lexsort((cand, row[cand]))[:kk]
            sel = cand[order]
            out_idx[lo + r] = sel
            out_dist[lo + r] = row[sel]
    return out_idx, out_dist


def variogram_accumulate(lats, lons, values, n_bins: int, geographic: bool, lon_scale: float):
    """Accumulate squared value differences of all point pairs into equal-width
    lag bins over (0, h_max].

    Returns ``(counts, sq_sums, h_max)``; the semivariance of bin j is
    ``sq_sums[j] / (2 * counts[j])`` for non-empty bins.
    """
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = lats.size
    counts = np.zeros(n_bins, dtype=np.int64)
    sq_sums = np.zeros(n_bins, dtype=np.float64)
    if n < 2:
        return counts, sq_sums, 0.0

    iu, ju = np.triu_indices(n, k=1)
    if geographic:
        a = (
            np.sin(np.radians(lats[ju] - lats[iu]) / 2.0) ** 2
            + np.cos(np.radians(lats[iu]))
            * np.cos(np.radians(lats[ju]))
            * np.sin(np.radians(lons[ju] - lons[iu]) / 2.0) ** 2
        )
        np.clip(a, 0.0, 1.0, out=a)
        d = 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))
    else:
        dlat = lats[ju] - lats[iu]
        dlon = (lons[ju] - lons[iu]) * lon_scale
        d = np.sqrt(dlat * dlat + dlon * dlon)
    h_max = float(d.max())
    if h_max <= 0.0:
        return counts, sq_sums, h_max
    width = h_max / n_bins
    bins = np.ceil(d / width).astype(np.int64) - 1
    np.clip(bins, 0, n_bins - 1, out=bins)
    dv2 = (values[ju] - values[iu]) ** 2
    counts += np.bincount(bins, minlength=n_bins)
    sq_sums += np.bincount(bins, weights=dv2, minlength=n_bins)
    return counts, sq_sums, h_max
