import math

import numpy as np
import pytest

from climrecon.stats import (
    MetricSamples,
    UnequalGroupsError,
    chi2_sf,
    compare_methods,
    dunn_posthoc,
    eta_squared,
    eta_squared_from_h,
    holm_bonferroni,
    kruskal_wallis,
    normal_sf_two_sided,
    rank_biserial,
)


def samples(*groups, labels=None):
    labels = labels or tuple(f"g{i}" for i in range(len(groups)))
    return MetricSamples(labels=tuple(labels), groups=tuple(np.asarray(g, float) for g in groups))


class TestKruskalWallis:
    def test_textbook_fixture(self):
        # ranks 1..9, mean ranks 2/5/8:
        # H = 12/90 * (3*4 + 3*25 + 3*64) - 30 = 37.2 - 30 = 7.2
        res = kruskal_wallis(samples([1, 2, 3], [4, 5, 6], [7, 8, 9]))
        assert res.h == pytest.approx(7.2, abs=1e-12)
        assert res.p_value == pytest.approx(chi2_sf(7.2, 2), abs=1e-15)

    def test_identical_groups(self):
        res = kruskal_wallis(samples([5, 5, 5], [5, 5, 5], [5, 5, 5]))
        assert res.h == pytest.approx(0.0, abs=1e-12)
        assert res.p_value == pytest.approx(1.0)

    def test_matches_scipy_with_ties(self, rng):
        from scipy.stats import kruskal

        for _ in range(25):
            gs = [rng.integers(0, 6, rng.integers(4, 20)).astype(float) for _ in range(3)]
            res = kruskal_wallis(samples(*gs))
            want_h, want_p = kruskal(*gs)
            assert res.h == pytest.approx(want_h, rel=1e-10)
            assert res.p_value == pytest.approx(want_p, rel=1e-8)

    def test_monotone_transform_invariance(self, rng):
        gs = [rng.normal(0, 1, 30) for _ in range(3)]
        a = kruskal_wallis(samples(*gs)).h
        b = kruskal_wallis(samples(*[np.exp(g) for g in gs])).h
        assert a == pytest.approx(b, rel=1e-12)


class TestEtaSquared:
    def test_paper_rmse_row(self):
        assert eta_squared_from_h(70.67, 3, 100) == pytest.approx(0.23, abs=0.005)

    def test_paper_mae_row(self):
        assert eta_squared_from_h(169.66, 3, 100) == pytest.approx(0.56, abs=0.005)

    def test_formula(self):
        assert eta_squared_from_h(7.2, 3, 3) == pytest.approx((7.2 - 2) / (9 - 3))

    def test_unequal_groups_raise(self):
        with pytest.raises(UnequalGroupsError):
            eta_squared(samples([1, 2, 3], [4, 5], [6, 7, 8]))

    def test_omnibus_omits_eta_for_unequal_groups(self):
        res = kruskal_wallis(samples([1, 2, 3], [4, 5], [6, 7, 8]))
        assert res.eta_squared is None
        assert res.h > 0


class TestHolm:
    def test_step_down_fixture(self):
        adj = holm_bonferroni([0.01, 0.03, 0.04])
        np.testing.assert_allclose(adj, [0.03, 0.06, 0.06], atol=1e-15)

    def test_never_below_raw_and_capped(self, rng):
        for _ in range(50):
            p = rng.uniform(0, 1, rng.integers(1, 10))
            adj = holm_bonferroni(p)
            assert np.all(adj >= p - 1e-15)
            assert np.all(adj <= 1.0)
            order = np.argsort(p)
            assert np.all(np.diff(adj[order]) >= -1e-15)  # monotone in sorted order

    def test_single_p(self):
        np.testing.assert_allclose(holm_bonferroni([0.2]), [0.2])


class TestRankBiserial:
    def test_equal_mean_ranks_zero(self):
        assert rank_biserial([1.0, 4.0], [2.0, 3.0]) == pytest.approx(0.0)

    def test_complete_separation_extremes(self):
        g1 = np.arange(100, 200, dtype=float)  # all above group 2
        g2 = np.arange(0, 100, dtype=float)
        assert rank_biserial(g1, g2) == pytest.approx(1.0)
        assert rank_biserial(g2, g1) == pytest.approx(-1.0)

    def test_hand_example(self):
        # joint ranks: (1,2) -> 1.5 mean, (3,4) -> 3.5; r = 2*(-2)/4 = -1
        assert rank_biserial([1.0, 2.0], [3.0, 4.0]) == pytest.approx(-1.0)


class TestDunn:
    def test_identical_groups_all_insignificant(self):
        res = dunn_posthoc(samples([3, 3, 3], [3, 3, 3], [3, 3, 3]))
        for pr in res:
            assert pr.z == pytest.approx(0.0)
            assert pr.p_adjusted == pytest.approx(1.0)

    def test_two_group_formula_oracle(self):
        # direct evaluation: N=6, mean ranks 2 and 5, no ties
        res = dunn_posthoc(samples([1, 2, 3], [7, 8, 9]))
        se = math.sqrt((6 * 7 / 12.0) * (1 / 3 + 1 / 3))
        want_z = (2 - 5) / se
        assert res[0].z == pytest.approx(want_z, abs=1e-12)
        assert res[0].p_raw == pytest.approx(normal_sf_two_sided(want_z), abs=1e-15)

    def test_tie_correction_enters_variance(self):
        with_ties = dunn_posthoc(samples([1, 1, 2], [3, 3, 4]))
        tie_term = ((2**3 - 2) + (2**3 - 2)) / (12.0 * 5)
        se = math.sqrt((6 * 7 / 12.0 - tie_term) * (2 / 3))
        r1 = np.mean([1.5, 1.5, 3.0])
        r2 = np.mean([4.5, 4.5, 6.0])
        assert with_ties[0].z == pytest.approx((r1 - r2) / se, abs=1e-12)

    def test_pair_count(self):
        res = dunn_posthoc(samples([1, 2], [3, 4], [5, 6], [7, 8]))
        assert len(res) == 6  # k(k-1)/2


class TestSpecialFunctions:
    def test_chi2_sf_against_scipy(self, rng):
        from scipy.stats import chi2 as scipy_chi2

        for df in (1, 2, 5, 10):
            for x in rng.uniform(0.01, 40, 20):
                assert chi2_sf(float(x), df) == pytest.approx(
                    scipy_chi2.sf(x, df), abs=1e-12
                )

    def test_normal_two_sided_against_scipy(self, rng):
        from scipy.stats import norm

        for z in rng.uniform(-6, 6, 30):
            assert normal_sf_two_sided(float(z)) == pytest.approx(
                2 * norm.sf(abs(z)), abs=1e-12
            )


class TestCompareMethods:
    def _metricsamples(self, groups, labels=("a", "b")):
        return {
            "rmse": samples(*groups, labels=labels),
        }

    def test_identical_methods_no_significance(self, rng):
        g = rng.normal(5, 1, 30)
        report = compare_methods(self._metricsamples([g, g.copy()]))
        assert report.metrics[0].posthoc == []
        assert report.metrics[0].omnibus.p_value > 0.05

    def test_large_shift_detected(self, rng):
        g1 = rng.normal(0, 1, 100)
        report = compare_methods(self._metricsamples([g1, g1 + 10.0]))
        mc = report.metrics[0]
        assert mc.omnibus.p_value < 0.05
        assert len(mc.posthoc) == 1
        assert mc.posthoc[0].p_adjusted < 0.05

    def test_median_iqr_match_quantile_oracle(self, rng):
        g1 = rng.normal(3, 2, 41)
        g2 = rng.normal(4, 2, 41)
        report = compare_methods(self._metricsamples([g1, g2]))
        mc = report.metrics[0]
        for label, g in (("a", g1), ("b", g2)):
            assert mc.medians[label] == pytest.approx(float(np.quantile(g, 0.5)), abs=1e-9)
            want_iqr = float(np.quantile(g, 0.75) - np.quantile(g, 0.25))
            assert mc.iqrs[label] == pytest.approx(want_iqr, abs=1e-9)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            compare_methods(self._metricsamples([[1.0, 2.0], [3.0, 4.0]]))

    def test_rows_and_text_render(self, rng):
        g1 = rng.normal(0, 1, 50)
        report = compare_methods(self._metricsamples([g1, g1 + 5.0]))
        rows = report.to_rows()
        assert rows[0]["metric"] == "rmse"
        text = report.to_text()
        assert "omnibus H" in text
