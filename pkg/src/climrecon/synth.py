"""Deterministic synthetic station dataset for desk-scale runs and tests.

Each date samples stations uniformly over a fixed European-ish box and reads
a smooth field made of a handful of Gaussian bumps on a per-date base
temperature. Values are quantized to tenths of a degree like the real input
format; a small fraction of rows carry suspect/missing flags so the validity
filter has something to do.
"""

from __future__ import annotations

import csv

import numpy as np

from .ingest import EXPECTED_HEADER

LAT_RANGE = (44.0, 54.0)
LON_RANGE = (8.0, 20.0)


def bump_field(lats, lons, bumps, base: float):
    """base + sum of Gaussian bumps; bumps rows are (lat, lon, amp, sigma)."""
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    out = np.full(lats.shape, base, dtype=np.float64)
    for blat, blon, amp, sigma in bumps:
        d2 = (lats - blat) ** 2 + (lons - blon) ** 2
        out += amp * np.exp(-d2 / (2.0 * sigma**2))
    return out


def make_field_params(rng: np.random.Generator, n_bumps: int = 4):
    base = float(rng.uniform(2.0, 18.0))
    bumps = []
    for _ in range(n_bumps):
        bumps.append(
            (
                float(rng.uniform(*LAT_RANGE)),
                float(rng.uniform(*LON_RANGE)),
                float(rng.uniform(-8.0, 8.0)),
                float(rng.uniform(1.5, 4.0)),
            )
        )
    return base, bumps


def write_synthetic_csv(
    path,
    n_dates: int = 5,
    n_stations: int = 600,
    seed: int = 0,
    noise_std: float = 0.05,
    start_month: int = 6,
) -> list[str]:
    """Write the consolidated CSV; returns the generated date strings."""
    rng = np.random.default_rng(seed)
    dates = [f"2021-{start_month:02d}-{d + 1:02d}" for d in range(n_dates)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXPECTED_HEADER)
        for date in dates:
            base, bumps = make_field_params(rng)
            lats = rng.uniform(*LAT_RANGE, size=n_stations)
            lons = rng.uniform(*LON_RANGE, size=n_stations)
            values = bump_field(lats, lons, bumps, base)
            values = values + rng.normal(0.0, noise_std, size=n_stations)
            flags = rng.choice(
                ["valid", "suspect", "missing"], size=n_stations, p=[0.97, 0.02, 0.01]
            )
            for i in range(n_stations):
                writer.writerow(
                    [
                        f"S{i:04d}",
                        format(lats[i], ".10f"),
                        format(lons[i], ".10f"),
                        date,
                        int(round(values[i] * 10.0)),
                        flags[i],
                    ]
                )
    return dates
