# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: kd-tree kNN traversal, variogram pair accumulation
and pairwise distance matrices.

Must return exactly what kernels.pyref returns (values to floating-point
noise, tie order identically); the test suite enforces the equivalence.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport asin, cos, sin, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double EARTH_RADIUS_KM = 6371.0
cdef double DEG2RAD = 3.141592653589793 / 180.0


cdef inline double _hav_term(double qlat_r, double qlon_r, double plat_deg, double plon_deg) noexcept nogil:
    # haversine "a" term; monotone with great-circle distance on [0, pi]
    cdef double plat_r = plat_deg * DEG2RAD
    cdef double plon_r = plon_deg * DEG2RAD
    cdef double sdlat = sin((plat_r - qlat_r) / 2.0)
    cdef double sdlon = sin((plon_r - qlon_r) / 2.0)
    cdef double a = sdlat * sdlat + cos(qlat_r) * cos(plat_r) * sdlon * sdlon
    if a < 0.0:
        a = 0.0
    elif a > 1.0:
        a = 1.0
    return a


cdef inline double _hav_to_km(double a) noexcept nogil:
    return 2.0 * EARTH_RADIUS_KM * asin(sqrt(a))


cdef inline double _sq_euclid(double qlat, double qlon, double plat, double plon) noexcept nogil:
    cdef double dlat = qlat - plat
    cdef double dlon = qlon - plon
    return dlat * dlat + dlon * dlon


# ---------------------------------------------------------------------------
# bounded max-heap keyed by (key, index); the root is the WORST kept
# neighbour: larger key, or equal key and larger index.

cdef inline bint _worse(double ka, cnp.int64_t ia, double kb, cnp.int64_t ib) noexcept nogil:
    if ka != kb:
        return ka > kb
    return ia > ib


cdef inline void _heap_push(double* hkey, cnp.int64_t* hidx, int* size, int cap,
                            double key, cnp.int64_t idx) noexcept nogil:
    cdef int pos, child, parent
    cdef double tk
    cdef cnp.int64_t ti
    if size[0] < cap:
        pos = size[0]
        hkey[pos] = key
        hidx[pos] = idx
        size[0] += 1
        while pos > 0:
            parent = (pos - 1) >> 1
            if _worse(hkey[pos], hidx[pos], hkey[parent], hidx[parent]):
                tk = hkey[pos]; hkey[pos] = hkey[parent]; hkey[parent] = tk
                ti = hidx[pos]; hidx[pos] = hidx[parent]; hidx[parent] = ti
                pos = parent
            else:
                break
        return
    # full: replace the root if the candidate is better
    if not _worse(hkey[0], hidx[0], key, idx):
        return
    hkey[0] = key
    hidx[0] = idx
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= cap:
            break
        if child + 1 < cap and _worse(hkey[child + 1], hidx[child + 1], hkey[child], hidx[child]):
            child += 1
        if _worse(hkey[child], hidx[child], hkey[pos], hidx[pos]):
            tk = hkey[pos]; hkey[pos] = hkey[child]; hkey[child] = tk
            ti = hidx[pos]; hidx[pos] = hidx[child]; hidx[child] = ti
            pos = child
        else:
            break


cdef inline void _heap_pop(double* hkey, cnp.int64_t* hidx, int* size) noexcept nogil:
    cdef int pos = 0, child
    cdef double tk
    cdef cnp.int64_t ti
    size[0] -= 1
    hkey[0] = hkey[size[0]]
    hidx[0] = hidx[size[0]]
    while True:
        child = 2 * pos + 1
        if child >= size[0]:
            break
        if child + 1 < size[0] and _worse(hkey[child + 1], hidx[child + 1], hkey[child], hidx[child]):
            child += 1
        if _worse(hkey[child], hidx[child], hkey[pos], hidx[pos]):
            tk = hkey[pos]; hkey[pos] = hkey[child]; hkey[child] = tk
            ti = hidx[pos]; hidx[pos] = hidx[child]; hidx[child] = ti
            pos = child
        else:
            break


# ---------------------------------------------------------------------------
# traversal state shared across the recursive descent of one query

cdef struct QueryCtx:
    const double* lats
    const double* lons
    const cnp.int32_t* node_axis
    const double* node_split
    const cnp.int32_t* node_left
    const cnp.int32_t* node_right
    const cnp.int32_t* node_start
    const cnp.int32_t* node_end
    const cnp.int64_t* perm
    double qlat
    double qlon
    double qlat_r
    double qlon_r
    bint geographic
    int cap
    int size
    double* hkey
    cnp.int64_t* hidx


cdef inline double _cell_min_key(QueryCtx* ctx, double lat_lo, double lat_hi,
                                 double lon_lo, double lon_hi) noexcept nogil:
    # lower bound on the reported distance from the query to any point
    # inside the cell rectangle; heap keys are reported distances so that
    # ties in output break by node index exactly as a linear scan would
    cdef double dlat = 0.0, dlon = 0.0
    cdef double g1, g2, cmin, sdlat, sdlon, a
    if ctx.qlat < lat_lo:
        dlat = lat_lo - ctx.qlat
    elif ctx.qlat > lat_hi:
        dlat = ctx.qlat - lat_hi
    if ctx.qlon < lon_lo:
        dlon = lon_lo - ctx.qlon
    elif ctx.qlon > lon_hi:
        dlon = ctx.qlon - lon_hi
    if not ctx.geographic:
        return sqrt(dlat * dlat + dlon * dlon)
    # conservative haversine bound: each term of the formula is bounded below
    # separately (lat gap, wrapped lon gap, smallest cos(lat) over the cell)
    g1 = lon_lo - ctx.qlon
    if g1 < 0.0:
        g1 = -g1
    if g1 > 360.0 - g1:
        g1 = 360.0 - g1
    g2 = lon_hi - ctx.qlon
    if g2 < 0.0:
        g2 = -g2
    if g2 > 360.0 - g2:
        g2 = 360.0 - g2
    if ctx.qlon >= lon_lo and ctx.qlon <= lon_hi:
        dlon = 0.0
    else:
        dlon = g1 if g1 < g2 else g2
    cmin = cos(lat_lo * DEG2RAD)
    g1 = cos(lat_hi * DEG2RAD)
    if g1 < cmin:
        cmin = g1
    if cmin < 0.0:
        cmin = 0.0
    sdlat = sin(dlat * DEG2RAD / 2.0)
    sdlon = sin(dlon * DEG2RAD / 2.0)
    a = sdlat * sdlat + cos(ctx.qlat_r) * cmin * sdlon * sdlon
    if a > 1.0:
        a = 1.0
    return _hav_to_km(a)


cdef void _visit(QueryCtx* ctx, int node, double lat_lo, double lat_hi,
                 double lon_lo, double lon_hi) noexcept nogil:
    cdef int axis = ctx.node_axis[node]
    cdef int i
    cdef cnp.int64_t p
    cdef double key, split, bound
    cdef int near_child, far_child
    cdef double n_lat_lo, n_lat_hi, n_lon_lo, n_lon_hi
    cdef double f_lat_lo, f_lat_hi, f_lon_lo, f_lon_hi

    if axis < 0:  # leaf: scan the point range
        for i in range(ctx.node_start[node], ctx.node_end[node]):
            p = ctx.perm[i]
            if ctx.geographic:
                key = _hav_to_km(_hav_term(ctx.qlat_r, ctx.qlon_r, ctx.lats[p], ctx.lons[p]))
            else:
                key = sqrt(_sq_euclid(ctx.qlat, ctx.qlon, ctx.lats[p], ctx.lons[p]))
            _heap_push(ctx.hkey, ctx.hidx, &ctx.size, ctx.cap, key, p)
        return

    split = ctx.node_split[node]
    if axis == 0:
        if ctx.qlat <= split:
            near_child = ctx.node_left[node]
            far_child = ctx.node_right[node]
            n_lat_lo = lat_lo; n_lat_hi = split
            f_lat_lo = split;  f_lat_hi = lat_hi
        else:
            near_child = ctx.node_right[node]
            far_child = ctx.node_left[node]
            n_lat_lo = split;  n_lat_hi = lat_hi
            f_lat_lo = lat_lo; f_lat_hi = split
        n_lon_lo = f_lon_lo = lon_lo
        n_lon_hi = f_lon_hi = lon_hi
    else:
        if ctx.qlon <= split:
            near_child = ctx.node_left[node]
            far_child = ctx.node_right[node]
            n_lon_lo = lon_lo; n_lon_hi = split
            f_lon_lo = split;  f_lon_hi = lon_hi
        else:
            near_child = ctx.node_right[node]
            far_child = ctx.node_left[node]
            n_lon_lo = split;  n_lon_hi = lon_hi
            f_lon_lo = lon_lo; f_lon_hi = split
        n_lat_lo = f_lat_lo = lat_lo
        n_lat_hi = f_lat_hi = lat_hi

    _visit(ctx, near_child, n_lat_lo, n_lat_hi, n_lon_lo, n_lon_hi)

    # the far cell can still hold a point tying the current worst (and
    # winning on index), so visit on <= rather than <
    if ctx.size < ctx.cap:
        _visit(ctx, far_child, f_lat_lo, f_lat_hi, f_lon_lo, f_lon_hi)
    else:
        bound = _cell_min_key(ctx, f_lat_lo, f_lat_hi, f_lon_lo, f_lon_hi)
        if bound <= ctx.hkey[0]:
            _visit(ctx, far_child, f_lat_lo, f_lat_hi, f_lon_lo, f_lon_hi)


def knn_many(tree, qlats, qlons, k, geographic):
    """Exact k nearest nodes per query via kd-tree descent; ties broken by
    lower node index. Mirrors kernels.pyref.knn_many."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lats = np.ascontiguousarray(tree.lats, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lons = np.ascontiguousarray(tree.lons, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] node_axis = np.ascontiguousarray(tree.node_axis, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] node_split = np.ascontiguousarray(tree.node_split, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] node_left = np.ascontiguousarray(tree.node_left, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] node_right = np.ascontiguousarray(tree.node_right, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] node_start = np.ascontiguousarray(tree.node_start, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] node_end = np.ascontiguousarray(tree.node_end, dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] perm = np.ascontiguousarray(tree.perm, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bbox = np.ascontiguousarray(tree.bbox, dtype=np.float64)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] qla = np.ascontiguousarray(np.atleast_1d(qlats), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qlo = np.ascontiguousarray(np.atleast_1d(qlons), dtype=np.float64)

    cdef cnp.npy_intp n = lats.shape[0]
    cdef cnp.npy_intp m = qla.shape[0]
    cdef int kk = int(min(int(k), n))
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out_idx = np.empty((m, kk), dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_dist = np.empty((m, kk), dtype=np.float64)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] hkey_arr = np.empty(kk, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hidx_arr = np.empty(kk, dtype=np.int64)

    cdef QueryCtx ctx
    ctx.lats = &lats[0]
    ctx.lons = &lons[0]
    ctx.node_axis = &node_axis[0]
    ctx.node_split = &node_split[0]
    ctx.node_left = &node_left[0]
    ctx.node_right = &node_right[0]
    ctx.node_start = &node_start[0]
    ctx.node_end = &node_end[0]
    ctx.perm = <const cnp.int64_t*>&perm[0]
    ctx.geographic = bool(geographic)
    ctx.cap = kk
    ctx.hkey = &hkey_arr[0]
    ctx.hidx = <cnp.int64_t*>&hidx_arr[0]

    cdef double lat_lo = bbox[0], lat_hi = bbox[1], lon_lo = bbox[2], lon_hi = bbox[3]
    cdef cnp.npy_intp qi
    cdef int j
    cdef double key
    with nogil:
        for qi in range(m):
            ctx.qlat = qla[qi]
            ctx.qlon = qlo[qi]
            ctx.qlat_r = ctx.qlat * DEG2RAD
            ctx.qlon_r = ctx.qlon * DEG2RAD
            ctx.size = 0
            _visit(&ctx, 0, lat_lo, lat_hi, lon_lo, lon_hi)
            # drain the heap worst-first into the tail of the output row
            for j in range(kk - 1, -1, -1):
                out_idx[qi, j] = ctx.hidx[0]
                out_dist[qi, j] = ctx.hkey[0]
                _heap_pop(ctx.hkey, ctx.hidx, &ctx.size)
    return out_idx, out_dist


def pairwise_distances(alat, alon, blat, blon, geographic, lon_scale=1.0):
    """(len(a), len(b)) distance matrix; mirrors kernels.pyref."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] al = np.ascontiguousarray(np.atleast_1d(alat), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ao = np.ascontiguousarray(np.atleast_1d(alon), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bl = np.ascontiguousarray(np.atleast_1d(blat), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bo = np.ascontiguousarray(np.atleast_1d(blon), dtype=np.float64)
    cdef long na = al.shape[0], nb = bl.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((na, nb), dtype=np.float64)
    cdef bint geo = bool(geographic)
    cdef double scale = float(lon_scale)
    cdef long i, j
    cdef double qlat_r, qlon_r, dlat, dlon
    with nogil:
        for i in range(na):
            if geo:
                qlat_r = al[i] * DEG2RAD
                qlon_r = ao[i] * DEG2RAD
                for j in range(nb):
                    out[i, j] = _hav_to_km(_hav_term(qlat_r, qlon_r, bl[j], bo[j]))
            else:
                for j in range(nb):
                    dlat = al[i] - bl[j]
                    dlon = (ao[i] - bo[j]) * scale
                    out[i, j] = sqrt(dlat * dlat + dlon * dlon)
    return out


def variogram_accumulate(lats, lons, values, n_bins, geographic, lon_scale):
    """Pair accumulation for the empirical semivariogram; mirrors
    kernels.pyref.variogram_accumulate."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] la = np.ascontiguousarray(lats, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lo = np.ascontiguousarray(lons, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = np.ascontiguousarray(values, dtype=np.float64)
    cdef long n = la.shape[0]
    cdef int nb = int(n_bins)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(nb, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sq_sums = np.zeros(nb, dtype=np.float64)
    cdef bint geo = bool(geographic)
    cdef double scale = float(lon_scale)
    cdef double h_max = 0.0
    cdef long i, j
    cdef double d, q, qlat_r, qlon_r, dlat, dlon, width, dv
    cdef long b
    if n < 2:
        return counts, sq_sums, 0.0
    with nogil:
        for i in range(n):
            if geo:
                qlat_r = la[i] * DEG2RAD
                qlon_r = lo[i] * DEG2RAD
            for j in range(i + 1, n):
                if geo:
                    d = _hav_to_km(_hav_term(qlat_r, qlon_r, la[j], lo[j]))
                else:
                    dlat = la[i] - la[j]
                    dlon = (lo[i] - lo[j]) * scale
                    d = sqrt(dlat * dlat + dlon * dlon)
                if d > h_max:
                    h_max = d
    if h_max <= 0.0:
        return counts, sq_sums, h_max
    width = h_max / nb
    with nogil:
        for i in range(n):
            if geo:
                qlat_r = la[i] * DEG2RAD
                qlon_r = lo[i] * DEG2RAD
            for j in range(i + 1, n):
                if geo:
                    d = _hav_to_km(_hav_term(qlat_r, qlon_r, la[j], lo[j]))
                else:
                    dlat = la[i] - la[j]
                    dlon = (lo[i] - lo[j]) * scale
                    d = sqrt(dlat * dlat + dlon * dlon)
                # ceil(d / width) - 1, evaluated exactly as numpy does it
                q = d / width
                b = <long>q
                if <double>b < q:
                    b = b + 1
                b = b - 1
                if b < 0:
                    b = 0
                elif b >= nb:
                    b = nb - 1
                dv = va[i] - va[j]
                counts[b] += 1
                sq_sums[b] += dv * dv
    return counts, sq_sums, float(h_max)
