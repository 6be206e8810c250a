"""Quality measures computed on test-split predictions.

All four are per-pair aggregates in observation units (degC, except the
dimensionless coefficient of determination), invariant to pair order, and
obey mae <= rmse <= delta_max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConstantObservationsError(ValueError):
    """The coefficient of determination is undefined when all observed values
    are equal (zero total sum of squares)."""


@dataclass(frozen=True)
class EvalPair:
    observed: np.ndarray
    predicted: np.ndarray

    def __post_init__(self) -> None:
        obs = np.asarray(self.observed, dtype=np.float64)
        pred = np.asarray(self.predicted, dtype=np.float64)
        if obs.ndim != 1 or pred.ndim != 1 or obs.size != pred.size:
            raise ValueError("observed and predicted must be 1-D and equally long")
        if obs.size < 1:
            raise ValueError("need at least one pair")
        if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(pred))):
            raise ValueError("observed and predicted must be finite")
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "predicted", pred)


@dataclass(frozen=True)
class MetricSet:
    rmse: float
    mae: float
    r2: float
    delta_max: float


def rmse(e: EvalPair) -> float:
    r = e.observed - e.predicted
    return float(np.sqrt(np.mean(r * r)))


def mae(e: EvalPair) -> float:
    return float(np.mean(np.abs(e.observed - e.predicted)))


def r2(e: EvalPair) -> float:
    if e.observed.size < 2:
        raise ConstantObservationsError("r2 needs at least two observations")
    ss_tot = float(np.sum((e.observed - e.observed.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantObservationsError("r2 undefined for constant observations")
    ss_res = float(np.sum((e.observed - e.predicted) ** 2))
    return 1.0 - ss_res / ss_tot


def delta_max(e: EvalPair) -> float:
    return float(np.max(np.abs(e.observed - e.predicted)))


def compute_metrics(e: EvalPair) -> MetricSet:
    return MetricSet(rmse=rmse(e), mae=mae(e), r2=r2(e), delta_max=delta_max(e))
