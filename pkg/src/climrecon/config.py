"""Experiment configuration: a flat key=value file with # comments, every
key overridable from the command line by a flag of the same name.

The canonical serialization (sorted key=value lines) is hashed into each
stage manifest so reruns can be checked for config drift.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .bench import LARGE_LADDER, SMALL_LADDER
from .domain import CoordinateSystem

KNOWN_METHODS = ("idw", "kriging", "gabor")


class ConfigError(ValueError):
    """Bad configuration file or override; the CLI maps this to exit code 2."""


DEFAULTS: dict[str, str] = {
    "data": "",
    "out": "",
    "seed": "0",
    "methods": "idw,kriging,gabor",
    "coordinate": "euclidean",
    "n_dates": "100",
    "min_valid": "500",
    "alpha": "0.05",
    "budget_idw": "50,100",
    "budget_kriging": "50,100",
    "budget_gabor": "50,200",
    "gabor_epochs": "500",
    "gabor_hidden_dims": "32,64,128,256,512,1024",
    "gabor_latent_dims": "32,64,128,256,512,1024",
    "gabor_max_layers": "10",
    "gabor_max_batch": "1024",
    "bench_ladder": "small",
    "bench_sizes": "",
    "bench_reps": "10",
    "bench_warmup": "1",
}


def parse_config_file(path) -> dict[str, str]:
    """key = value lines; '#' starts a comment; blank lines ignored."""
    values: dict[str, str] = {}
    text = Path(path).read_text()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {line_no}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}: line {line_no}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _int_list(raw: str) -> tuple[int, ...]:
    if not raw.strip():
        return ()
    try:
        return tuple(int(x.strip()) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {raw!r}")


def _budget(raw: str) -> tuple[int, int]:
    parts = _int_list(raw)
    if len(parts) != 2:
        raise ConfigError(f"a budget is 'n_initial,n_iterations', got {raw!r}")
    return parts[0], parts[1]


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict[str, str]
    data: Path
    out: Path
    seed: int
    methods: tuple[str, ...]
    coordinate: CoordinateSystem
    n_dates: int
    min_valid: int
    alpha: float
    budgets: dict[str, tuple[int, int]]
    gabor_epochs: int
    gabor_hidden_dims: tuple[int, ...]
    gabor_latent_dims: tuple[int, ...]
    gabor_max_layers: int
    gabor_max_batch: int
    bench_sizes: tuple[int, ...]
    bench_reps: int
    bench_warmup: int

    def config_hash(self) -> str:
        """Hash of the experiment parameters. Paths are excluded: the same
        experiment pointed at a different output directory is the same
        experiment (the input file is captured by content, see manifest)."""
        canon = "\n".join(f"{k}={self.raw[k]}" for k in sorted(self.raw) if k not in ("data", "out"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def data_hash(self) -> str:
        if self.data.exists():
            return hashlib.sha256(self.data.read_bytes()).hexdigest()
        return ""


def build_config(values: dict[str, str]) -> ExperimentConfig:
    raw = dict(DEFAULTS)
    raw.update(values)
    try:
        if not raw["data"]:
            raise ConfigError("config key 'data' is required")
        if not raw["out"]:
            raise ConfigError("config key 'out' is required")
        methods = tuple(m.strip() for m in raw["methods"].split(",") if m.strip())
        for m in methods:
            if m not in KNOWN_METHODS:
                raise ConfigError(f"unknown method {m!r}; known: {KNOWN_METHODS}")
        if not methods:
            raise ConfigError("at least one method is required")
        try:
            coordinate = CoordinateSystem(raw["coordinate"])
        except ValueError:
            raise ConfigError(f"coordinate must be euclidean or geographic, got {raw['coordinate']!r}")
        ladder = raw["bench_ladder"]
        if ladder not in ("small", "large"):
            raise ConfigError(f"bench_ladder must be small or large, got {ladder!r}")
        sizes = _int_list(raw["bench_sizes"])
        if not sizes:
            sizes = SMALL_LADDER if ladder == "small" else LARGE_LADDER
        return ExperimentConfig(
            raw=raw,
            data=Path(raw["data"]),
            out=Path(raw["out"]),
            seed=int(raw["seed"]),
            methods=methods,
            coordinate=coordinate,
            n_dates=int(raw["n_dates"]),
            min_valid=int(raw["min_valid"]),
            alpha=float(raw["alpha"]),
            budgets={
                "idw": _budget(raw["budget_idw"]),
                "kriging": _budget(raw["budget_kriging"]),
                "gabor": _budget(raw["budget_gabor"]),
            },
            gabor_epochs=int(raw["gabor_epochs"]),
            gabor_hidden_dims=_int_list(raw["gabor_hidden_dims"]),
            gabor_latent_dims=_int_list(raw["gabor_latent_dims"]),
            gabor_max_layers=int(raw["gabor_max_layers"]),
            gabor_max_batch=int(raw["gabor_max_batch"]),
            bench_sizes=sizes,
            bench_reps=int(raw["bench_reps"]),
            bench_warmup=int(raw["bench_warmup"]),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc))


def write_manifest(cfg: ExperimentConfig, command: str, backend: str, version: str) -> Path:
    """Deterministic stage manifest (no timestamps): identical configs give
    identical manifests, which makes rerun comparison a file diff."""
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "data_hash": cfg.data_hash(),
        "seed": cfg.seed,
        "artifact_version": version,
        "kernel_backend": backend,
    }
    path = cfg.out / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
