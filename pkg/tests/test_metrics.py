import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from climrecon.metrics import (
    ConstantObservationsError,
    EvalPair,
    compute_metrics,
    delta_max,
    mae,
    r2,
    rmse,
)


def pair(obs, pred):
    return EvalPair(observed=np.asarray(obs, float), predicted=np.asarray(pred, float))


class TestHandValues:
    def test_perfect_prediction(self):
        p = pair([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert rmse(p) == 0.0
        assert mae(p) == 0.0
        assert r2(p) == 1.0
        assert delta_max(p) == 0.0

    def test_rmse_hand(self):
        assert rmse(pair([0.0, 2.0], [1.0, 1.0])) == pytest.approx(1.0)  # sqrt((1+1)/2)

    def test_mae_hand(self):
        assert mae(pair([0.0, 2.0], [1.0, 1.0])) == pytest.approx(1.0)
        assert mae(pair([3.0], [5.0])) == pytest.approx(2.0)

    def test_r2_hand(self):
        assert r2(pair([0.0, 2.0], [1.0, 1.0])) == pytest.approx(0.0)  # 1 - 2/2

    def test_r2_mean_predictor_is_zero(self):
        obs = np.array([1.0, 2.0, 3.0, 4.0])
        assert r2(pair(obs, np.full(4, obs.mean()))) == pytest.approx(0.0)

    def test_r2_can_be_negative(self):
        assert r2(pair([0.0, 1.0], [10.0, -10.0])) < -1.0

    def test_delta_max_hand(self):
        assert delta_max(pair([1.0, 5.0], [2.0, 2.0])) == pytest.approx(3.0)

    def test_r2_constant_observations(self):
        with pytest.raises(ConstantObservationsError):
            r2(pair([2.0, 2.0], [1.0, 3.0]))
        with pytest.raises(ConstantObservationsError):
            r2(pair([2.0], [1.0]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            pair([np.nan], [1.0])


class TestOrderProperties:
    def test_inequalities_on_random_pairs(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 60))
            p = pair(rng.normal(0, 10, n), rng.normal(0, 10, n))
            assert mae(p) <= rmse(p) + 1e-12
            assert rmse(p) <= delta_max(p) + 1e-12

    def test_permutation_invariance(self, rng):
        obs = rng.normal(0, 5, 50)
        pred = rng.normal(0, 5, 50)
        perm = rng.permutation(50)
        a = compute_metrics(pair(obs, pred))
        b = compute_metrics(pair(obs[perm], pred[perm]))
        assert a == b

    def test_r2_one_iff_zero_residuals(self, rng):
        obs = rng.normal(0, 5, 30)
        assert r2(pair(obs, obs)) == 1.0
        pred = obs.copy()
        pred[7] += 1e-3
        assert r2(pair(obs, pred)) < 1.0


@settings(max_examples=100, deadline=None)
@given(
    hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e6, 1e6)),
    hnp.arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e6, 1e6)),
)
def test_metric_ordering_property(obs, pred):
    n = min(obs.size, pred.size)
    p = pair(obs[:n], pred[:n])
    assert 0.0 <= mae(p) <= rmse(p) * (1 + 1e-12) + 1e-12
    assert rmse(p) <= delta_max(p) * (1 + 1e-12) + 1e-12
