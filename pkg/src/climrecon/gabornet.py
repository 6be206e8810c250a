"""Multiplicative Gabor coordinate network trained by mini-batch gradient
descent.

The network maps min-max-normalized (lat, lon) to a normalized value. Each
filter layer applies per-unit Gabor responses

    g_j(x) = exp(-gamma_j / 2 * ||x - mu_j||^2) * sin(<omega_j, x> + phi_j)

and layers compose multiplicatively: the t-th feature vector is a linear map
of the previous one, gated elementwise by the t-th filter response. A linear
latent head and a scalar readout close the model. All arithmetic is float64
NumPy with hand-written gradients (verified against finite differences in
the test suite), and every draw comes from one seeded Generator, so training
is bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import ClimatePointCloud, QueryPoint

LEARNING_RATE_BOUNDS = (1e-5, 1e-2)
L2_BOUNDS = (0.0, 0.1)
BATCH_SIZE_BOUNDS = (32, 1024)
DIM_CHOICES = (32, 64, 128, 256, 512, 1024)
N_LAYERS_BOUNDS = (1, 10)
INPUT_SCALE_BOUNDS = (2.0, 1024.0)
ALPHA_BOUNDS = (0.0, 100.0)
DEFAULT_EPOCHS = 500


class DivergenceError(RuntimeError):
    """Training loss became non-finite (learning rate too large for the
    sampled configuration); tuners treat this as a failed trial."""


@dataclass(frozen=True)
class GaborNetParams:
    learning_rate: float
    l2: float
    batch_size: int
    hidden_dim: int
    latent_dim: int
    n_layers: int
    input_scale: float
    alpha: float
    epochs: int = DEFAULT_EPOCHS  # kept at 500 for experiments; tests may shrink it

    def __post_init__(self) -> None:
        def chk(name, v, lo, hi):
            if not (lo <= v <= hi):
                raise ValueError(f"{name} outside [{lo}, {hi}]: {v}")

        chk("learning_rate", self.learning_rate, *LEARNING_RATE_BOUNDS)
        chk("l2", self.l2, *L2_BOUNDS)
        chk("batch_size", self.batch_size, *BATCH_SIZE_BOUNDS)
        if self.hidden_dim not in DIM_CHOICES:
            raise ValueError(f"hidden_dim must be one of {DIM_CHOICES}: {self.hidden_dim}")
        if self.latent_dim not in DIM_CHOICES:
            raise ValueError(f"latent_dim must be one of {DIM_CHOICES}: {self.latent_dim}")
        chk("n_layers", self.n_layers, *N_LAYERS_BOUNDS)
        chk("input_scale", self.input_scale, *INPUT_SCALE_BOUNDS)
        chk("alpha", self.alpha, *ALPHA_BOUNDS)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass(frozen=True)
class NormalizationState:
    """Per-axis min-max transform to [-1, 1] fitted on the training split.

    A degenerate axis (max == min) maps to 0 and inverts back to the
    constant, so constant fields survive the round trip."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    val_min: float
    val_max: float

    @staticmethod
    def _fwd(x, lo, hi):
        span = hi - lo
        if span == 0.0:
            return np.zeros_like(x)
        return 2.0 * (x - lo) / span - 1.0

    @staticmethod
    def _inv(x, lo, hi):
        span = hi - lo
        if span == 0.0:
            return np.full_like(x, lo)
        return (x + 1.0) * span / 2.0 + lo

    def norm_coords(self, lats, lons) -> np.ndarray:
        lats = np.asarray(lats, dtype=np.float64)
        lons = np.asarray(lons, dtype=np.float64)
        return np.stack(
            [self._fwd(lats, self.lat_min, self.lat_max), self._fwd(lons, self.lon_min, self.lon_max)],
            axis=1,
        )

    def norm_values(self, values) -> np.ndarray:
        return self._fwd(np.asarray(values, dtype=np.float64), self.val_min, self.val_max)

    def denorm_values(self, normed) -> np.ndarray:
        return self._inv(np.asarray(normed, dtype=np.float64), self.val_min, self.val_max)

    @classmethod
    def fit(cls, pc: ClimatePointCloud) -> "NormalizationState":
        return cls(
            lat_min=float(pc.lats.min()),
            lat_max=float(pc.lats.max()),
            lon_min=float(pc.lons.min()),
            lon_max=float(pc.lons.max()),
            val_min=float(pc.values.min()),
            val_max=float(pc.values.max()),
        )


def gabor_response(omega: np.ndarray, phi: np.ndarray, mu: np.ndarray, gamma: np.ndarray, x: np.ndarray):
    """Raw per-unit responses of one filter layer for a (B, 2) input batch."""
    r2 = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ mu.T) + (mu * mu).sum(axis=1)[None, :]
    env = np.exp(-0.5 * gamma[None, :] * r2)
    return env * np.sin(x @ omega.T + phi[None, :])


class GaborNetwork:
    """The trainable model: parameter dict plus the fitted normalization."""

    def __init__(
        self,
        n_layers: int,
        hidden_dim: int,
        latent_dim: int,
        input_scale: float,
        alpha: float,
        norm: NormalizationState,
        rng: np.random.Generator,
    ):
        self.n_layers = int(n_layers)
        self.hidden_dim = int(hidden_dim)
        self.latent_dim = int(latent_dim)
        self.input_scale = float(input_scale)
        self.alpha = float(alpha)
        self.norm = norm
        self.params: dict[str, np.ndarray] = {}
        h, p = self.hidden_dim, self.latent_dim
        for t in range(self.n_layers):
            s = self.input_scale / (t + 1)
            self.params[f"omega{t}"] = rng.uniform(-s, s, size=(h, 2))
            self.params[f"phi{t}"] = rng.uniform(-np.pi, np.pi, size=h)
            self.params[f"mu{t}"] = rng.uniform(-1.0, 1.0, size=(h, 2))
            if alpha > 0.0:
                gam = rng.gamma(shape=alpha, scale=1.0 / alpha, size=h)
            else:
                gam = np.ones(h)
            self.params[f"gamma{t}"] = gam
        bw = 1.0 / np.sqrt(h)
        for t in range(1, self.n_layers):
            self.params[f"W{t}"] = rng.uniform(-bw, bw, size=(h, h))
            self.params[f"c{t}"] = rng.uniform(-bw, bw, size=h)
        self.params["U"] = rng.uniform(-bw, bw, size=(p, h))
        self.params["d"] = rng.uniform(-bw, bw, size=p)
        bp = 1.0 / np.sqrt(p)
        self.params["v"] = rng.uniform(-bp, bp, size=p)
        self.params["b"] = rng.uniform(-bp, bp, size=1)

    # -- forward / backward ------------------------------------------------

    def _filter(self, t: int, x: np.ndarray):
        pr = self.params
        omega, phi = pr[f"omega{t}"], pr[f"phi{t}"]
        mu, gamma = pr[f"mu{t}"], pr[f"gamma{t}"]
        r2 = (x * x).sum(axis=1)[:, None] - 2.0 * (x @ mu.T) + (mu * mu).sum(axis=1)[None, :]
        theta = x @ omega.T + phi[None, :]
        with np.errstate(over="ignore"):
            env = np.exp(-0.5 * gamma[None, :] * r2)
        s = np.sin(theta)
        return env * s, {"r2": r2, "env": env, "s": s, "cos": np.cos(theta)}

    def forward(self, xn: np.ndarray, caches: list | None = None) -> np.ndarray:
        """Normalized prediction for a (B, 2) normalized coordinate batch;
        pass ``caches`` to retain the intermediates backward() needs."""
        pr = self.params
        z, cache = self._filter(0, xn)
        if caches is not None:
            cache["g"] = z
            cache["z_prev"] = None
            caches.append(cache)
        for t in range(1, self.n_layers):
            a = z @ pr[f"W{t}"].T + pr[f"c{t}"][None, :]
            g, cache = self._filter(t, xn)
            if caches is not None:
                cache["g"] = g
                cache["a"] = a
                cache["z_prev"] = z
                caches.append(cache)
            z = a * g
        u = z @ pr["U"].T + pr["d"][None, :]
        if caches is not None:
            caches.append({"z_last": z, "u": u})
        return u @ pr["v"] + pr["b"][0]

    def loss_and_grads(self, xn: np.ndarray, yn: np.ndarray, l2: float):
        """Mean squared error plus l2 * ||params||^2, with gradients for every
        parameter (the finite-difference tests lean on this exactness)."""
        pr = self.params
        caches: list = []
        pred = self.forward(xn, caches)
        resid = pred - yn
        batch = xn.shape[0]
        loss = float(np.mean(resid * resid))
        grads = {k: None for k in pr}

        head = caches[-1]
        dpred = 2.0 * resid / batch
        grads["b"] = np.array([dpred.sum()])
        grads["v"] = head["u"].T @ dpred
        du = dpred[:, None] * pr["v"][None, :]
        grads["U"] = du.T @ head["z_last"]
        grads["d"] = du.sum(axis=0)
        dz = du @ pr["U"]

        for t in range(self.n_layers - 1, -1, -1):
            cache = caches[t]
            if t > 0:
                da = dz * cache["g"]
                dg = dz * cache["a"]
                grads[f"W{t}"] = da.T @ cache["z_prev"]
                grads[f"c{t}"] = da.sum(axis=0)
                dz = da @ pr[f"W{t}"]
            else:
                dg = dz
            env, s, cos, r2 = cache["env"], cache["s"], cache["cos"], cache["r2"]
            gamma = pr[f"gamma{t}"]
            mu = pr[f"mu{t}"]
            dtheta = dg * env * cos
            grads[f"omega{t}"] = dtheta.T @ xn
            grads[f"phi{t}"] = dtheta.sum(axis=0)
            denv = dg * s * env  # (dL/d env) * env, shared by gamma and mu
            grads[f"gamma{t}"] = -0.5 * (denv * r2).sum(axis=0)
            col = denv.sum(axis=0)
            grads[f"mu{t}"] = gamma[:, None] * (denv.T @ xn - mu * col[:, None])

        if l2 > 0.0:
            for k, arr in pr.items():
                loss += l2 * float(np.sum(arr * arr))
                grads[k] = grads[k] + 2.0 * l2 * arr
        return loss, grads

    # -- prediction ---------------------------------------------------------

    def predict(self, lats, lons) -> np.ndarray:
        xn = self.norm.norm_coords(lats, lons)
        return self.norm.denorm_values(self.forward(xn))

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    # -- checkpointing -------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "n_layers": self.n_layers,
            "hidden_dim": self.hidden_dim,
            "latent_dim": self.latent_dim,
            "input_scale": self.input_scale,
            "alpha": self.alpha,
            "norm": {k: getattr(self.norm, k) for k in self.norm.__dataclass_fields__},
        }
        np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **self.params)

    @classmethod
    def load(cls, path) -> "GaborNetwork":
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            params = {k: data[k] for k in data.files if k != "__meta__"}
        net = cls.__new__(cls)
        net.n_layers = int(meta["n_layers"])
        net.hidden_dim = int(meta["hidden_dim"])
        net.latent_dim = int(meta["latent_dim"])
        net.input_scale = float(meta["input_scale"])
        net.alpha = float(meta["alpha"])
        net.norm = NormalizationState(**meta["norm"])
        net.params = params
        return net


def train_gabor(
    train: ClimatePointCloud,
    val: ClimatePointCloud,
    params: GaborNetParams,
    seed: int,
) -> tuple[GaborNetwork, list[float]]:
    """Train on the training split, tracking validation MAE (degC) per epoch.

    Returns the parameter snapshot with the best validation MAE seen across
    epochs, plus the full trace. Raises DivergenceError if the training loss
    goes non-finite.
    """
    rng = np.random.default_rng(seed)
    norm = NormalizationState.fit(train)
    net = GaborNetwork(
        params.n_layers,
        params.hidden_dim,
        params.latent_dim,
        params.input_scale,
        params.alpha,
        norm,
        rng,
    )
    xn = norm.norm_coords(train.lats, train.lons)
    yn = norm.norm_values(train.values)
    n = xn.shape[0]
    bsz = min(params.batch_size, n)

    trace: list[float] = []
    best_mae = np.inf
    best_params = net.copy_params()
    for _epoch in range(params.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, bsz):
            sel = order[lo:lo + bsz]
            loss, grads = net.loss_and_grads(xn[sel], yn[sel], params.l2)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {_epoch}")
            for k in net.params:
                net.params[k] -= params.learning_rate * grads[k]
        preds = net.predict(val.lats, val.lons)
        if not np.all(np.isfinite(preds)):
            raise DivergenceError(f"validation predictions non-finite at epoch {_epoch}")
        epoch_mae = float(np.mean(np.abs(preds - val.values)))
        trace.append(epoch_mae)
        if epoch_mae < best_mae:
            best_mae = epoch_mae
            best_params = net.copy_params()
    net.params = best_params
    return net, trace


def gabor_reconstruct(net: GaborNetwork, targets: Sequence[QueryPoint] | tuple) -> np.ndarray:
    """Predicted values at targets (list of QueryPoint or (lats, lons))."""
    if isinstance(targets, tuple) and len(targets) == 2:
        lats, lons = targets
    else:
        lats = [t.lat for t in targets]
        lons = [t.lon for t in targets]
    return net.predict(lats, lons)
