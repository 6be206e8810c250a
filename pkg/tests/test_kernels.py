"""The compiled and NumPy kernel backends must be interchangeable."""

import numpy as np
import pytest

from climrecon.kernels import build_tree, pyref

try:
    from climrecon.kernels import _ckern
except ImportError:  # extension not built; the fallback covers everything
    _ckern = None

needs_compiled = pytest.mark.skipif(_ckern is None, reason="compiled kernels not built")


def _variogram_loop_oracle(lats, lons, values, n_bins, geographic, lon_scale):
    # independent double loop over pairs
    import math

    n = len(lats)
    ds, dv2 = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if geographic:
                d2r = math.pi / 180.0
                a = (
                    math.sin((lats[j] - lats[i]) * d2r / 2) ** 2
                    + math.cos(lats[i] * d2r)
                    * math.cos(lats[j] * d2r)
                    * math.sin((lons[j] - lons[i]) * d2r / 2) ** 2
                )
                d = 2 * 6371.0 * math.asin(math.sqrt(min(1.0, max(0.0, a))))
            else:
                d = math.sqrt((lats[i] - lats[j]) ** 2 + ((lons[i] - lons[j]) * lon_scale) ** 2)
            ds.append(d)
            dv2.append((values[i] - values[j]) ** 2)
    h_max = max(ds)
    width = h_max / n_bins
    counts = np.zeros(n_bins, dtype=np.int64)
    sums = np.zeros(n_bins)
    for d, v in zip(ds, dv2):
        b = min(n_bins - 1, max(0, int(np.ceil(d / width)) - 1))
        counts[b] += 1
        sums[b] += v
    return counts, sums, h_max


class TestPyrefAgainstOracles:
    def test_variogram_accumulate_matches_pair_loop(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 60))
            lats = rng.uniform(-50, 50, n)
            lons = rng.uniform(-150, 150, n)
            vals = rng.normal(10, 8, n)
            nb = int(rng.integers(1, 12))
            for geo, sc in ((False, 0.5), (True, 1.0)):
                c, s, h = pyref.variogram_accumulate(lats, lons, vals, nb, geo, sc)
                co, so, ho = _variogram_loop_oracle(lats, lons, vals, nb, geo, sc)
                assert np.array_equal(c, co)
                np.testing.assert_allclose(s, so, rtol=1e-9, atol=1e-12)
                assert h == pytest.approx(ho, rel=1e-12)

    def test_pairwise_euclidean_against_scipy(self, rng):
        from scipy.spatial.distance import cdist

        a = np.column_stack([rng.uniform(-50, 50, 30), rng.uniform(-150, 150, 30)])
        b = np.column_stack([rng.uniform(-50, 50, 20), rng.uniform(-150, 150, 20)])
        got = pyref.pairwise_distances(a[:, 0], a[:, 1], b[:, 0], b[:, 1], False, 1.0)
        np.testing.assert_allclose(got, cdist(a, b), rtol=1e-12, atol=1e-12)

    def test_pairwise_anisotropy_stretches_longitude(self):
        d = pyref.pairwise_distances([0.0], [0.0], [0.0], [2.0], False, 0.25)
        assert d[0, 0] == pytest.approx(0.5, abs=1e-15)


@needs_compiled
class TestBackendEquivalence:
    def test_knn_identical_on_random_clouds(self, rng):
        for _ in range(25):
            n = int(rng.integers(1, 300))
            lats = rng.uniform(-60, 60, n)
            lons = rng.uniform(-170, 170, n)
            tree = build_tree(lats, lons, leaf_size=int(rng.integers(1, 20)))
            qla = rng.uniform(-70, 70, 12)
            qlo = rng.uniform(-180, 180, 12)
            for geo in (False, True):
                for k in (1, 4, n):
                    i1, d1 = pyref.knn_many(tree, qla, qlo, k, geo)
                    i2, d2 = _ckern.knn_many(tree, qla, qlo, k, geo)
                    assert np.array_equal(i1, i2)
                    np.testing.assert_allclose(d1, d2, rtol=1e-13, atol=1e-12)

    def test_variogram_identical(self, rng):
        for _ in range(15):
            n = int(rng.integers(2, 150))
            lats = rng.uniform(-60, 60, n)
            lons = rng.uniform(-170, 170, n)
            vals = rng.normal(0, 5, n)
            nb = int(rng.integers(1, 40))
            for geo, sc in ((False, 0.3), (False, 2.0), (True, 1.0)):
                c1, s1, h1 = pyref.variogram_accumulate(lats, lons, vals, nb, geo, sc)
                c2, s2, h2 = _ckern.variogram_accumulate(lats, lons, vals, nb, geo, sc)
                assert np.array_equal(c1, c2)
                np.testing.assert_allclose(s1, s2, rtol=1e-12)
                assert h1 == pytest.approx(h2, rel=1e-14)

    def test_pairwise_identical(self, rng):
        a = rng.uniform(-80, 80, 50)
        b = rng.uniform(-180, 180, 50)
        c = rng.uniform(-80, 80, 41)
        d = rng.uniform(-180, 180, 41)
        for geo, sc in ((False, 0.7), (True, 1.0)):
            m1 = pyref.pairwise_distances(a, b, c, d, geo, sc)
            m2 = _ckern.pairwise_distances(a, b, c, d, geo, sc)
            np.testing.assert_allclose(m1, m2, rtol=1e-13, atol=1e-12)


def test_tree_covers_all_points(rng):
    lats = rng.uniform(-10, 10, 257)
    lons = rng.uniform(-10, 10, 257)
    tree = build_tree(lats, lons, leaf_size=7)
    assert sorted(tree.perm.tolist()) == list(range(257))
    leaves = tree.node_axis == -1
    spans = tree.node_end[leaves] - tree.node_start[leaves]
    assert spans.sum() == 257
    assert spans.max() <= 7
