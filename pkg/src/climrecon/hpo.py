"""Bayesian hyper-parameter search over mixed spaces, minimizing validation
MAE.

A Gaussian-process surrogate (Matern-5/2 kernel, observation noise 1e-6) is
fitted on finite-objective trials in an encoded unit cube (numerics scaled
to [0, 1], log scale for log-ranged reals, categoricals one-hot). Each
iteration proposes the Expected-Improvement maximizer over 1024 seeded
uniform candidates plus local perturbations of the incumbent. Failed trials
carry objective = +inf and never enter the surrogate.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.special

from .domain import ClimatePointCloud, CoordinateSystem
from .gabornet import DIM_CHOICES, GaborNetParams, train_gabor
from .idw import IdwParams, idw_reconstruct
from .kriging import KrigingParams, VariogramFamily, krige
from .spatial import build as build_index

_log = logging.getLogger(__name__)

_NOISE = 1e-6
_N_CANDIDATES = 1024
_N_LOCAL = 32
_LOCAL_SCALE = 0.05
_LENGTHSCALES = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0)

FAILED_OBJECTIVE = float("inf")


class ParamKind(Enum):
    REAL = "real"
    REAL_LOG = "real_log"
    INTEGER = "integer"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: ParamKind
    low: float | None = None
    high: float | None = None
    categories: tuple | None = None

    def __post_init__(self) -> None:
        if self.kind is ParamKind.CATEGORICAL:
            if not self.categories or len(self.categories) < 2:
                raise ValueError(f"{self.name}: need >= 2 categories")
        else:
            # low == high is a degenerate but legal single-point range
            if self.low is None or self.high is None or not (self.low <= self.high):
                raise ValueError(f"{self.name}: need low <= high")
            if self.kind is ParamKind.REAL_LOG and self.low <= 0:
                raise ValueError(f"{self.name}: log-scaled range must be positive")


@dataclass(frozen=True)
class SearchSpace:
    method: str
    specs: tuple[ParamSpec, ...]

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]


@dataclass(frozen=True)
class Trial:
    params: dict
    objective: float
    status: str  # "ok" | "failed"


@dataclass(frozen=True)
class BoBudget:
    n_initial: int = 50
    n_iterations: int = 100

    def __post_init__(self) -> None:
        if self.n_initial < 1 or self.n_iterations < 0:
            raise ValueError("budget must have n_initial >= 1 and n_iterations >= 0")


def idw_space() -> SearchSpace:
    return SearchSpace(
        "idw",
        (
            ParamSpec("k_neighbours", ParamKind.INTEGER, 1, 50),
            ParamSpec("power", ParamKind.REAL, 1e-7, 5.0),
        ),
    )


def kriging_space() -> SearchSpace:
    return SearchSpace(
        "kriging",
        (
            ParamSpec("n_bins", ParamKind.INTEGER, 2, 50),
            ParamSpec("anisotropy_scale", ParamKind.REAL_LOG, 1e-5, 5.0),
            ParamSpec("coordinate", ParamKind.CATEGORICAL, categories=("euclidean", "geographic")),
            ParamSpec(
                "model_family",
                ParamKind.CATEGORICAL,
                categories=tuple(f.value for f in VariogramFamily),
            ),
        ),
    )


def _dim_spec(name: str, dims: Sequence[int]) -> ParamSpec:
    dims = tuple(int(d) for d in dims)
    if len(dims) == 1:  # pinned to one width: a degenerate integer range
        return ParamSpec(name, ParamKind.INTEGER, dims[0], dims[0])
    return ParamSpec(name, ParamKind.CATEGORICAL, categories=dims)


def gabor_space(
    hidden_dims: Sequence[int] = DIM_CHOICES,
    latent_dims: Sequence[int] = DIM_CHOICES,
    max_layers: int = 10,
    max_batch: int = 1024,
) -> SearchSpace:
    """Default bounds are the full experiment space; the keyword arguments
    let small desk-scale runs shrink it without touching the defaults."""
    return SearchSpace(
        "gabor",
        (
            ParamSpec("learning_rate", ParamKind.REAL_LOG, 1e-5, 1e-2),
            ParamSpec("l2", ParamKind.REAL, 0.0, 0.1),
            ParamSpec("batch_size", ParamKind.INTEGER, 32, max_batch),
            _dim_spec("hidden_dim", hidden_dims),
            _dim_spec("latent_dim", latent_dims),
            ParamSpec("n_layers", ParamKind.INTEGER, 1, max_layers),
            ParamSpec("input_scale", ParamKind.REAL, 2.0, 1024.0),
            ParamSpec("alpha", ParamKind.REAL, 0.0, 100.0),
        ),
    )


def space_for(method: str, **kwargs) -> SearchSpace:
    if method == "idw":
        return idw_space()
    if method == "kriging":
        return kriging_space()
    if method == "gabor":
        return gabor_space(**kwargs)
    raise ValueError(f"unknown method {method!r}")


# -- sampling and encoding ---------------------------------------------------


def _draw(spec: ParamSpec, rng: np.random.Generator):
    if spec.kind is ParamKind.REAL:
        return float(rng.uniform(spec.low, spec.high))
    if spec.kind is ParamKind.REAL_LOG:
        return float(np.exp(rng.uniform(np.log(spec.low), np.log(spec.high))))
    if spec.kind is ParamKind.INTEGER:
        return int(rng.integers(int(spec.low), int(spec.high) + 1))
    return spec.categories[int(rng.integers(0, len(spec.categories)))]


def sample_initial(space: SearchSpace, n: int, seed) -> list[dict]:
    """n uniform assignments (log-uniform on log-scaled reals)."""
    rng = np.random.default_rng(seed)
    return [{s.name: _draw(s, rng) for s in space.specs} for _ in range(n)]


def _encoded_dim(space: SearchSpace) -> int:
    return sum(len(s.categories) if s.kind is ParamKind.CATEGORICAL else 1 for s in space.specs)


def encode(space: SearchSpace, params: dict) -> np.ndarray:
    out = []
    for s in space.specs:
        v = params[s.name]
        if s.kind is ParamKind.CATEGORICAL:
            block = [0.0] * len(s.categories)
            block[s.categories.index(v)] = 1.0
            out.extend(block)
        elif s.low == s.high:
            out.append(0.5)
        elif s.kind is ParamKind.REAL_LOG:
            out.append((math.log(v) - math.log(s.low)) / (math.log(s.high) - math.log(s.low)))
        else:
            out.append((float(v) - s.low) / (s.high - s.low))
    return np.asarray(out, dtype=np.float64)


def decode(space: SearchSpace, x: np.ndarray) -> dict:
    params = {}
    pos = 0
    for s in space.specs:
        if s.kind is ParamKind.CATEGORICAL:
            width = len(s.categories)
            params[s.name] = s.categories[int(np.argmax(x[pos:pos + width]))]
            pos += width
            continue
        u = float(np.clip(x[pos], 0.0, 1.0))
        pos += 1
        if s.low == s.high:
            params[s.name] = int(s.low) if s.kind is ParamKind.INTEGER else float(s.low)
        elif s.kind is ParamKind.REAL_LOG:
            v = math.exp(math.log(s.low) + u * (math.log(s.high) - math.log(s.low)))
            params[s.name] = float(min(max(v, s.low), s.high))
        elif s.kind is ParamKind.INTEGER:
            params[s.name] = int(min(max(round(s.low + u * (s.high - s.low)), s.low), s.high))
        else:
            params[s.name] = float(min(max(s.low + u * (s.high - s.low), s.low), s.high))
    return params


# -- Gaussian process surrogate ----------------------------------------------


def _matern52(xa: np.ndarray, xb: np.ndarray, ell: float) -> np.ndarray:
    d2 = np.maximum(
        ((xa * xa).sum(1)[:, None] - 2.0 * xa @ xb.T + (xb * xb).sum(1)[None, :]), 0.0
    )
    r = np.sqrt(d2) / ell
    sq5r = np.sqrt(5.0) * r
    return (1.0 + sq5r + 5.0 / 3.0 * r * r) * np.exp(-sq5r)


def _gp_fit(x: np.ndarray, y: np.ndarray):
    """Pick a lengthscale by marginal likelihood; returns a predictor or None
    if every Cholesky fails."""
    best = None
    best_lml = -np.inf
    n = x.shape[0]
    for ell in _LENGTHSCALES:
        k = _matern52(x, x, ell)
        k[np.diag_indices_from(k)] += _NOISE
        try:
            chol = scipy.linalg.cholesky(k, lower=True)
        except scipy.linalg.LinAlgError:
            continue
        alpha = scipy.linalg.cho_solve((chol, True), y)
        lml = (
            -0.5 * float(y @ alpha)
            - float(np.log(np.diag(chol)).sum())
            - 0.5 * n * math.log(2.0 * math.pi)
        )
        if lml > best_lml:
            best_lml = lml
            best = (ell, chol, alpha)
    if best is None:
        return None
    ell, chol, alpha = best

    def predict(xs: np.ndarray):
        ks = _matern52(xs, x, ell)
        mu = ks @ alpha
        v = scipy.linalg.solve_triangular(chol, ks.T, lower=True)
        var = np.maximum(1.0 - (v * v).sum(axis=0) + _NOISE, 1e-18)
        return mu, np.sqrt(var)

    return predict


def _normal_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * scipy.special.erfc(-z / np.sqrt(2.0))


def _normal_pdf(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    imp = best - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, imp / sigma, 0.0)
    ei = imp * _normal_cdf(z) + sigma * _normal_pdf(z)
    return np.where(sigma > 0, ei, np.maximum(imp, 0.0))


def propose_next(history: Sequence[Trial], space: SearchSpace, seed) -> dict:
    """Next assignment to evaluate; falls back to a uniform draw when the
    surrogate cannot be fitted (no finite trials, degenerate kernel)."""
    rng = np.random.default_rng(seed)
    finite = [t for t in history if math.isfinite(t.objective)]
    if not finite:
        return {s.name: _draw(s, rng) for s in space.specs}
    x = np.stack([encode(space, t.params) for t in finite])
    y = np.asarray([t.objective for t in finite], dtype=np.float64)
    y_std = y.std()
    y_n = (y - y.mean()) / (y_std if y_std > 0 else 1.0)

    dim = _encoded_dim(space)
    cands = rng.uniform(0.0, 1.0, size=(_N_CANDIDATES, dim))
    incumbent = x[int(np.argmin(y))]
    local = np.clip(
        incumbent[None, :] + rng.normal(0.0, _LOCAL_SCALE, size=(_N_LOCAL, dim)), 0.0, 1.0
    )
    cands = np.vstack([cands, local])

    predictor = _gp_fit(x, y_n)
    if predictor is None:
        return {s.name: _draw(s, rng) for s in space.specs}
    mu, sigma = predictor(cands)
    ei = expected_improvement(mu, sigma, float(y_n.min()))
    return decode(space, cands[int(np.argmax(ei))])


# -- the tuning loop ----------------------------------------------------------


def run_trial(objective: Callable[[dict], float], params: dict) -> Trial:
    try:
        value = float(objective(params))
    except Exception as exc:  # failures become +inf sentinels, never aborts
        _log.debug("trial failed: %s", exc)
        return Trial(params=params, objective=FAILED_OBJECTIVE, status="failed")
    if not math.isfinite(value):
        return Trial(params=params, objective=FAILED_OBJECTIVE, status="failed")
    return Trial(params=params, objective=value, status="ok")


def tune(
    space: SearchSpace,
    objective: Callable[[dict], float],
    budget: BoBudget,
    seed: int,
) -> tuple[Trial, list[Trial]]:
    """Run the full budget; returns (best trial, history). The best trial is
    the earliest argmin over finite objectives (or the first trial if every
    evaluation failed)."""
    sub_seeds = np.random.SeedSequence(seed).generate_state(budget.n_iterations + 1)
    history: list[Trial] = []
    for params in sample_initial(space, budget.n_initial, int(sub_seeds[0])):
        history.append(run_trial(objective, params))
    for i in range(budget.n_iterations):
        params = propose_next(history, space, int(sub_seeds[i + 1]))
        history.append(run_trial(objective, params))
    best = min(history, key=lambda t: t.objective)
    return best, history


# -- per-method validation-MAE objectives --------------------------------------


def make_objective(
    method: str,
    train: ClimatePointCloud,
    val: ClimatePointCloud,
    coordinate: CoordinateSystem,
    net_seed: int = 0,
    epochs: int | None = None,
) -> Callable[[dict], float]:
    """Validation-MAE objective for one (method, date). The Gabor network is
    trained with the same seed for every trial (common random numbers), so
    the search compares configurations, not initializations."""
    val_targets = (val.lats, val.lons)

    if method == "idw":
        index = build_index(train)

        def idw_obj(params: dict) -> float:
            p = IdwParams(k_neighbours=params["k_neighbours"], power=params["power"])
            preds = idw_reconstruct(train, index, p, val_targets, coordinate)
            return float(np.mean(np.abs(preds - val.values)))

        return idw_obj

    if method == "kriging":

        def krig_obj(params: dict) -> float:
            p = KrigingParams(
                n_bins=params["n_bins"],
                anisotropy_scale=params["anisotropy_scale"],
                coord=CoordinateSystem(params["coordinate"]),
                model_family=VariogramFamily(params["model_family"]),
            )
            preds = krige(train, p, val_targets)
            return float(np.mean(np.abs(preds - val.values)))

        return krig_obj

    if method == "gabor":

        def gabor_obj(params: dict) -> float:
            kwargs = dict(params)
            if epochs is not None:
                kwargs["epochs"] = epochs
            p = GaborNetParams(**kwargs)
            _net, trace = train_gabor(train, val, p, seed=net_seed)
            return min(trace) if trace else FAILED_OBJECTIVE

        return gabor_obj

    raise ValueError(f"unknown method {method!r}")


# -- history persistence --------------------------------------------------------


def save_history(path, space: SearchSpace, history: Sequence[Trial]) -> None:
    """One CSV per (date, method): param columns, objective, status, index."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(space.names + ["objective", "status", "trial_index"])
        for i, t in enumerate(history):
            row = [_fmt(t.params[name]) for name in space.names]
            row += [_fmt(t.objective), t.status, str(i)]
            writer.writerow(row)


def load_history(path, space: SearchSpace) -> list[Trial]:
    trials = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            params = {s.name: _parse(s, row[s.name]) for s in space.specs}
            trials.append(
                Trial(params=params, objective=float(row["objective"]), status=row["status"])
            )
    return trials


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _parse(spec: ParamSpec, raw: str):
    if spec.kind is ParamKind.CATEGORICAL:
        for c in spec.categories:
            if str(c) == raw:
                return c
        raise ValueError(f"{spec.name}: unknown category {raw!r}")
    if spec.kind is ParamKind.INTEGER:
        return int(raw)
    return float(raw)
