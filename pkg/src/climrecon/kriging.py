"""Ordinary kriging: empirical semivariogram, parametric model fitting and
the per-target linear system solve.

Pipeline: ``preprocess_ok`` rescales coordinates to [-1, 1] and standardises
values; ``empirical_variogram`` bins squared value differences by lag;
``fit_variogram`` fits one of six model families by bin-count-weighted least
squares; ``ok_reconstruct`` solves the (N+1) x (N+1) constrained system

    [ Gamma  1 ] [ w  ]   [ gamma0 ]
    [ 1^T    0 ] [ mu ] = [   1    ]

per target and de-standardises the weighted sum of node values.

Model forms use the practical-range convention (the structured part reaches
~95% of the sill at h = range for gaussian/exponential):

    spherical    n + s * (1.5 h/r - 0.5 (h/r)^3),  h <= r; else n + s
    exponential  n + s * (1 - exp(-3 h / r))
    gaussian     n + s * (1 - exp(-3 h^2 / r^2))
    linear       n + b * h
    power        n + c * h^e,  e in (0, 2)
    hole-effect  n + s * (1 - sin(pi h / r) / (pi h / r))
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from . import kernels
from .domain import ClimatePointCloud, CoordinateSystem, QueryPoint

_log = logging.getLogger(__name__)

N_BINS_BOUNDS = (2, 50)
ANISOTROPY_BOUNDS = (1e-5, 5.0)
_JITTER = 1e-10
_WEIGHT_SUM_TOL = 1e-6
_geo_aniso_warned = False


class ConstantFieldError(ValueError):
    """Raised when the training values are constant (zero standard deviation)."""


class DegenerateVariogramError(ValueError):
    """Raised when there are fewer non-empty lag bins than model parameters."""


class SingularSystemError(RuntimeError):
    """Raised when the kriging system cannot be solved even after jitter."""


class VariogramFamily(Enum):
    LINEAR = "linear"
    POWER = "power"
    GAUSSIAN = "gaussian"
    SPHERICAL = "spherical"
    EXPONENTIAL = "exponential"
    HOLE_EFFECT = "hole-effect"


@dataclass(frozen=True)
class KrigingParams:
    n_bins: int
    anisotropy_scale: float
    coord: CoordinateSystem
    model_family: VariogramFamily

    def __post_init__(self) -> None:
        if not (N_BINS_BOUNDS[0] <= self.n_bins <= N_BINS_BOUNDS[1]):
            raise ValueError(f"n_bins outside {N_BINS_BOUNDS}: {self.n_bins}")
        if not (ANISOTROPY_BOUNDS[0] <= self.anisotropy_scale <= ANISOTROPY_BOUNDS[1]):
            raise ValueError(f"anisotropy_scale outside {ANISOTROPY_BOUNDS}: {self.anisotropy_scale}")


@dataclass(frozen=True)
class StandardizationParams:
    """Invertible transform fitted on a training cloud: min-max for each
    coordinate axis (to [-1, 1]) and z-score for values (population std)."""

    value_mean: float
    value_std: float
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def scale_coords(self, lats, lons) -> tuple[np.ndarray, np.ndarray]:
        return (
            _minmax_scale(np.asarray(lats, dtype=np.float64), self.lat_min, self.lat_max),
            _minmax_scale(np.asarray(lons, dtype=np.float64), self.lon_min, self.lon_max),
        )

    def unscale_coords(self, slats, slons) -> tuple[np.ndarray, np.ndarray]:
        return (
            _minmax_unscale(np.asarray(slats, dtype=np.float64), self.lat_min, self.lat_max),
            _minmax_unscale(np.asarray(slons, dtype=np.float64), self.lon_min, self.lon_max),
        )

    def scale_values(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.value_mean) / self.value_std

    def unscale_values(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * self.value_std + self.value_mean


def _minmax_scale(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    if span == 0.0:
        return np.zeros_like(x)
    return 2.0 * (x - lo) / span - 1.0


def _minmax_unscale(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    if span == 0.0:
        return np.full_like(x, lo)
    return (x + 1.0) * span / 2.0 + lo


def preprocess_ok(pc: ClimatePointCloud) -> tuple[ClimatePointCloud, StandardizationParams]:
    """Scaled copy of the cloud plus the transform needed to invert it."""
    if pc.n < 2:
        raise ValueError("kriging preprocessing needs at least two observations")
    std = float(pc.values.std())  # population std
    if std == 0.0:
        raise ConstantFieldError("cannot standardise a constant field")
    sp = StandardizationParams(
        value_mean=float(pc.values.mean()),
        value_std=std,
        lat_min=float(pc.lats.min()),
        lat_max=float(pc.lats.max()),
        lon_min=float(pc.lons.min()),
        lon_max=float(pc.lons.max()),
    )
    slats, slons = sp.scale_coords(pc.lats, pc.lons)
    svals = sp.scale_values(pc.values)
    return ClimatePointCloud(slats, slons, svals), sp


@dataclass(frozen=True)
class EmpiricalVariogram:
    h: np.ndarray       # bin centers, strictly increasing
    gamma: np.ndarray   # semivariances, >= 0
    counts: np.ndarray  # pair counts per retained bin

    def __post_init__(self) -> None:
        if self.h.size and np.any(np.diff(self.h) <= 0):
            raise ValueError("bin centers must be strictly increasing")
        if np.any(self.gamma < 0.0):
            raise ValueError("semivariances must be non-negative")


def empirical_variogram(
    pc: ClimatePointCloud,
    n_bins: int,
    anisotropy_scale: float,
    cs: CoordinateSystem,
) -> EmpiricalVariogram:
    """Bin all point pairs into ``n_bins`` equal-width lag classes over
    (0, h_max] and average half the squared value differences.

    In Euclidean mode the longitude axis is multiplied by
    ``anisotropy_scale`` before the lag is computed; great-circle lags have
    no meaningful single-axis stretch, so the factor is forced to 1 there.
    """
    if pc.n < 2:
        raise ValueError("need at least two points for a variogram")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    geographic = cs is CoordinateSystem.GEOGRAPHIC
    if geographic and anisotropy_scale != 1.0:
        global _geo_aniso_warned
        # warn once per process, then debug: tuning sweeps hit this per trial
        _log.log(
            logging.WARNING if not _geo_aniso_warned else logging.DEBUG,
            "anisotropy scaling is undefined for great-circle lags; forcing factor to 1",
        )
        _geo_aniso_warned = True
        anisotropy_scale = 1.0
    counts, sq_sums, h_max = kernels.variogram_accumulate(
        pc.lats, pc.lons, pc.values, n_bins, geographic, anisotropy_scale
    )
    width = h_max / n_bins if h_max > 0 else 0.0
    keep = counts > 0
    centers = (np.arange(n_bins, dtype=np.float64) + 0.5) * width
    gamma = np.zeros(n_bins, dtype=np.float64)
    gamma[keep] = sq_sums[keep] / (2.0 * counts[keep])
    return EmpiricalVariogram(h=centers[keep], gamma=gamma[keep], counts=counts[keep])


@dataclass(frozen=True)
class FittedVariogram:
    """Parametric semivariogram; only the fields relevant to ``family`` are
    meaningful (slope for linear, scale/exponent for power, partial_sill and
    range_len otherwise). gamma(0) equals the nugget for every family."""

    family: VariogramFamily
    nugget: float
    partial_sill: float = 0.0
    range_len: float = 1.0
    slope: float = 0.0
    scale: float = 0.0
    exponent: float = 1.0

    def __post_init__(self) -> None:
        if self.nugget < 0 or self.partial_sill < 0 or self.slope < 0 or self.scale < 0:
            raise ValueError("variogram parameters must be non-negative")
        if self.range_len <= 0:
            raise ValueError("range must be positive")
        if self.family is VariogramFamily.POWER and not (0.0 < self.exponent < 2.0):
            raise ValueError("power exponent must lie in (0, 2)")

    def __call__(self, h) -> np.ndarray:
        return evaluate_variogram(self, h)


def evaluate_variogram(fv: FittedVariogram, h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    n = fv.nugget
    fam = fv.family
    if fam is VariogramFamily.LINEAR:
        return n + fv.slope * h
    if fam is VariogramFamily.POWER:
        return n + fv.scale * np.power(h, fv.exponent)
    r = fv.range_len
    s = fv.partial_sill
    if fam is VariogramFamily.GAUSSIAN:
        return n + s * (1.0 - np.exp(-3.0 * (h / r) ** 2))
    if fam is VariogramFamily.EXPONENTIAL:
        return n + s * (1.0 - np.exp(-3.0 * h / r))
    if fam is VariogramFamily.SPHERICAL:
        hr = np.minimum(h / r, 1.0)
        return n + s * (1.5 * hr - 0.5 * hr**3)
    if fam is VariogramFamily.HOLE_EFFECT:
        x = np.pi * h / r
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(x == 0.0, 1.0, np.sin(x) / x)
        return n + s * (1.0 - sinc)
    raise ValueError(f"unknown family {fam}")


_N_PARAMS = {
    VariogramFamily.LINEAR: 2,
    VariogramFamily.POWER: 3,
    VariogramFamily.GAUSSIAN: 3,
    VariogramFamily.SPHERICAL: 3,
    VariogramFamily.EXPONENTIAL: 3,
    VariogramFamily.HOLE_EFFECT: 3,
}

_EXPONENT_EPS = 1e-6


def _make_fitted(family: VariogramFamily, theta: np.ndarray) -> FittedVariogram:
    if family is VariogramFamily.LINEAR:
        return FittedVariogram(family, nugget=float(theta[0]), slope=float(theta[1]))
    if family is VariogramFamily.POWER:
        return FittedVariogram(
            family, nugget=float(theta[0]), scale=float(theta[1]), exponent=float(theta[2])
        )
    return FittedVariogram(
        family, nugget=float(theta[0]), partial_sill=float(theta[1]), range_len=float(theta[2])
    )


def _fit_starts(family: VariogramFamily, ev: EmpiricalVariogram) -> list[np.ndarray]:
    g = ev.gamma
    h = ev.h
    gmin = float(g.min())
    gmax = float(max(g.max(), 1e-12))
    hmax = float(h.max())
    if family is VariogramFamily.LINEAR:
        slope0 = gmax / hmax
        return [
            np.array([0.0, slope0]),
            np.array([gmin, slope0]),
            np.array([0.0, 0.5 * slope0]),
            np.array([0.5 * gmin, 2.0 * slope0]),
            np.array([0.0, 1e-6 * slope0 + 1e-12]),
        ]
    if family is VariogramFamily.POWER:
        starts = []
        for e in (0.5, 1.0, 1.5):
            starts.append(np.array([0.0, gmax / hmax**e, e]))
        starts.append(np.array([gmin, max(gmax - gmin, 1e-12) / hmax, 1.0]))
        starts.append(np.array([0.0, gmax / hmax**0.25, 0.25]))
        return starts
    return [
        np.array([0.0, gmax, hmax / 3.0]),
        np.array([gmin, max(gmax - gmin, 1e-12), hmax / 2.0]),
        np.array([0.0, gmax, hmax]),
        np.array([0.5 * gmin, gmax, hmax / 4.0]),
        np.array([0.0, gmax, 2.0 * hmax / 3.0]),
    ]


def _fit_bounds(family: VariogramFamily, ev: EmpiricalVariogram) -> list[tuple[float, float]]:
    hmax = float(ev.h.max())
    gmax = float(max(ev.gamma.max(), 1e-12))
    if family is VariogramFamily.LINEAR:
        return [(0.0, 2.0 * gmax), (0.0, np.inf)]
    if family is VariogramFamily.POWER:
        return [(0.0, 2.0 * gmax), (0.0, np.inf), (_EXPONENT_EPS, 2.0 - _EXPONENT_EPS)]
    return [(0.0, 2.0 * gmax), (0.0, 10.0 * gmax), (1e-8 * hmax, 100.0 * hmax)]


def fit_variogram(ev: EmpiricalVariogram, family: VariogramFamily) -> FittedVariogram:
    """Bin-count-weighted least-squares fit of one model family.

    Uses Nelder-Mead from five deterministic starts (plus one polishing
    restart from the best) so the result is reproducible without gradients.
    """
    n_params = _N_PARAMS[family]
    if ev.h.size < n_params:
        raise DegenerateVariogramError(
            f"{ev.h.size} non-empty bins cannot identify {n_params} parameters of {family.value}"
        )
    w = ev.counts.astype(np.float64)

    def objective(theta: np.ndarray) -> float:
        model = evaluate_variogram(_make_fitted(family, theta), ev.h)
        r = model - ev.gamma
        return float(np.dot(w, r * r))

    bounds = _fit_bounds(family, ev)
    opts = {"xatol": 1e-12, "fatol": 1e-14, "maxiter": 8000, "maxfev": 8000}
    best_theta = None
    best_val = np.inf
    for start in _fit_starts(family, ev):
        res = minimize(objective, start, method="Nelder-Mead", bounds=bounds, options=opts)
        if res.fun < best_val:
            best_val = res.fun
            best_theta = res.x
    # polish: a fresh simplex around the winner improves NM's final accuracy
    res = minimize(objective, best_theta, method="Nelder-Mead", bounds=bounds, options=opts)
    if res.fun < best_val:
        best_theta = res.x
    return _make_fitted(family, np.asarray(best_theta, dtype=np.float64))


def _target_arrays(targets) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(targets, tuple) and len(targets) == 2:
        return (
            np.ascontiguousarray(targets[0], dtype=np.float64),
            np.ascontiguousarray(targets[1], dtype=np.float64),
        )
    return (
        np.asarray([t.lat for t in targets], dtype=np.float64),
        np.asarray([t.lon for t in targets], dtype=np.float64),
    )


def _solve_ok_system(
    scaled: ClimatePointCloud,
    fv: FittedVariogram,
    tlats_scaled: np.ndarray,
    tlons_scaled: np.ndarray,
    cs: CoordinateSystem,
    anisotropy_scale: float,
) -> np.ndarray:
    """Solve for all targets at once; returns (N+1, M) of weights and the
    Lagrange multiplier row."""
    geographic = cs is CoordinateSystem.GEOGRAPHIC
    lon_scale = 1.0 if geographic else anisotropy_scale
    n = scaled.n
    d_nodes = kernels.pairwise_distances(
        scaled.lats, scaled.lons, scaled.lats, scaled.lons, geographic, lon_scale
    )
    a = np.empty((n + 1, n + 1), dtype=np.float64)
    a[:n, :n] = evaluate_variogram(fv, d_nodes)
    a[n, :n] = 1.0
    a[:n, n] = 1.0
    a[n, n] = 0.0

    d_targets = kernels.pairwise_distances(
        scaled.lats, scaled.lons, tlats_scaled, tlons_scaled, geographic, lon_scale
    )
    b = np.empty((n + 1, tlats_scaled.size), dtype=np.float64)
    b[:n] = evaluate_variogram(fv, d_targets)
    b[n] = 1.0

    for attempt in range(2):
        try:
            lu = scipy.linalg.lu_factor(a)
            sol = scipy.linalg.lu_solve(lu, b)
        except scipy.linalg.LinAlgError:
            sol = None
        if sol is not None and np.all(np.isfinite(sol)):
            sum_err = np.abs(sol[:n].sum(axis=0) - 1.0).max()
            if sum_err <= _WEIGHT_SUM_TOL:
                return sol
        if attempt == 0:
            a[np.arange(n), np.arange(n)] += _JITTER
    raise SingularSystemError(
        "ordinary kriging system could not be solved (degenerate geometry?)"
    )


def ok_weights(
    scaled: ClimatePointCloud,
    fv: FittedVariogram,
    sp: StandardizationParams,
    targets,
    cs: CoordinateSystem,
    anisotropy_scale: float,
) -> np.ndarray:
    """(M, N) kriging weights for raw-coordinate targets; rows sum to 1."""
    tlats, tlons = _target_arrays(targets)
    slats, slons = sp.scale_coords(tlats, tlons)
    sol = _solve_ok_system(scaled, fv, slats, slons, cs, anisotropy_scale)
    return sol[: scaled.n].T


def ok_reconstruct(
    scaled: ClimatePointCloud,
    fv: FittedVariogram,
    sp: StandardizationParams,
    targets,
    cs: CoordinateSystem,
    anisotropy_scale: float,
) -> np.ndarray:
    """Predicted values (de-standardised, degC) at raw-coordinate targets."""
    tlats, tlons = _target_arrays(targets)
    if tlats.size == 0:
        raise ValueError("targets must be non-empty")
    slats, slons = sp.scale_coords(tlats, tlons)
    sol = _solve_ok_system(scaled, fv, slats, slons, cs, anisotropy_scale)
    preds_scaled = sol[: scaled.n].T @ scaled.values
    return sp.unscale_values(preds_scaled)


def krige(
    pc: ClimatePointCloud,
    params: KrigingParams,
    targets: Sequence[QueryPoint] | tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """One-shot convenience: preprocess, fit the variogram and reconstruct."""
    scaled, sp = preprocess_ok(pc)
    ev = empirical_variogram(scaled, params.n_bins, params.anisotropy_scale, params.coord)
    fv = fit_variogram(ev, params.model_family)
    return ok_reconstruct(scaled, fv, sp, targets, params.coord, params.anisotropy_scale)
