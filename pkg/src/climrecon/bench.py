"""Reconstruction efficiency measurements: wall time and peak memory as a
function of target-set size.

Each cell (method, size, trial) times exactly one call of a prepared
reconstructor on freshly sampled uniform targets; fitting, index building
and network training happen before the timed region. Peak memory is the
high-watermark of process RSS sampled at ~1 ms by a helper thread, reported
as the increase over the pre-call baseline. Records can be appended to a CSV
as they are produced, so an interrupted run keeps its completed cells.
"""

from __future__ import annotations

import csv
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import psutil

from .domain import ClimatePointCloud

SMALL_LADDER = (10, 100, 500, 1000, 2000, 5000, 10000)
LARGE_LADDER = (100, 500, 1000, 5000, 10000, 50000, 100000, 500000, 1000000)

RECORD_FIELDS = ["method", "m", "trial", "seconds", "peak_bytes", "failed"]

# a prepared reconstructor: (target_lats, target_lons) -> predictions
Reconstructor = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple[int, ...]
    repetitions: int = 10
    methods: tuple[str, ...] = ("idw", "kriging", "gabor")
    warmup: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be strictly increasing")
        if not self.sizes:
            raise ValueError("need at least one size")
        if self.repetitions < 3:
            raise ValueError("need >= 3 repetitions for percentile intervals")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")


@dataclass(frozen=True)
class BenchRecord:
    method: str
    m: int
    trial: int
    seconds: float
    peak_bytes: int
    failed: bool = False


def sample_targets(pc: ClimatePointCloud, m: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """m uniform points over the cloud's bounding box, deterministic per seed."""
    if m < 1:
        raise ValueError("m must be >= 1")
    lat_min, lat_max, lon_min, lon_max = pc.bounding_box()
    rng = np.random.default_rng(seed)
    return rng.uniform(lat_min, lat_max, m), rng.uniform(lon_min, lon_max, m)


class PeakRssSampler:
    """Context manager: watermark of RSS growth during the wrapped region."""

    def __init__(self, interval_s: float = 0.001):
        self._interval = interval_s
        self._proc = psutil.Process()
        self._stop = threading.Event()
        self._peak = 0
        self._baseline = 0
        self.peak_delta_bytes = 0

    def _loop(self) -> None:
        while not self._stop.is_set():
            rss = self._proc.memory_info().rss
            if rss > self._peak:
                self._peak = rss
            self._stop.wait(self._interval)

    def __enter__(self) -> "PeakRssSampler":
        self._baseline = self._proc.memory_info().rss
        self._peak = self._baseline
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._stop.set()
        self._thread.join()
        rss = self._proc.memory_info().rss  # final sample, in case the region was < 1 ms
        if rss > self._peak:
            self._peak = rss
        self.peak_delta_bytes = max(0, self._peak - self._baseline)


def _append_record(path, record: BenchRecord, write_header: bool) -> None:
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(RECORD_FIELDS)
        writer.writerow(
            [
                record.method,
                record.m,
                record.trial,
                format(record.seconds, ".9e"),
                record.peak_bytes,
                int(record.failed),
            ]
        )
        fh.flush()


def run_bench(
    cfg: BenchConfig,
    reconstructors: dict[str, Reconstructor],
    cloud: ClimatePointCloud,
    out_csv: str | Path | None = None,
) -> list[BenchRecord]:
    """Strictly sequential sweep over methods x sizes x trials.

    Target sampling happens outside the timed region; the warmup runs per
    (method, size) are not recorded. Failures are flagged and the sweep
    continues."""
    records: list[BenchRecord] = []
    header_needed = out_csv is not None and not Path(out_csv).exists()
    for mi, method in enumerate(cfg.methods):
        fn = reconstructors[method]
        for m in cfg.sizes:
            # spawn_key from stable integers only: str hashes are per-process
            cell_seeds = np.random.SeedSequence(
                entropy=cfg.seed, spawn_key=(mi, m)
            ).generate_state(cfg.warmup + cfg.repetitions)
            for w in range(cfg.warmup):
                lats, lons = sample_targets(cloud, m, int(cell_seeds[w]))
                try:
                    fn(lats, lons)
                except Exception:
                    break
            for trial in range(cfg.repetitions):
                lats, lons = sample_targets(cloud, m, int(cell_seeds[cfg.warmup + trial]))
                failed = False
                sampler = PeakRssSampler()
                start = time.perf_counter()
                with sampler:
                    try:
                        fn(lats, lons)
                    except Exception:
                        failed = True
                elapsed = time.perf_counter() - start
                rec = BenchRecord(
                    method=method,
                    m=m,
                    trial=trial,
                    seconds=elapsed,
                    peak_bytes=sampler.peak_delta_bytes,
                    failed=failed,
                )
                records.append(rec)
                if out_csv is not None:
                    _append_record(out_csv, rec, header_needed)
                    header_needed = False
    return records


def read_records(path) -> list[BenchRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                BenchRecord(
                    method=row["method"],
                    m=int(row["m"]),
                    trial=int(row["trial"]),
                    seconds=float(row["seconds"]),
                    peak_bytes=int(row["peak_bytes"]),
                    failed=bool(int(row["failed"])),
                )
            )
    return out


@dataclass(frozen=True)
class BenchSummary:
    method: str
    m: int
    n_trials: int
    seconds_median: float
    seconds_lo: float     # 2.5th percentile
    seconds_hi: float     # 97.5th percentile
    bytes_median: float
    bytes_lo: float
    bytes_hi: float


def summarize_bench(records: Sequence[BenchRecord]) -> list[BenchSummary]:
    """Per (method, m): median and the 2.5/97.5 percentiles over non-failed
    trials (linear-interpolation percentiles)."""
    cells: dict[tuple[str, int], list[BenchRecord]] = {}
    for r in records:
        if not r.failed:
            cells.setdefault((r.method, r.m), []).append(r)
    out = []
    for (method, m) in sorted(cells, key=lambda km: (km[0], km[1])):
        rs = cells[(method, m)]
        secs = np.asarray([r.seconds for r in rs])
        mems = np.asarray([float(r.peak_bytes) for r in rs])
        s_lo, s_med, s_hi = np.percentile(secs, [2.5, 50.0, 97.5])
        m_lo, m_med, m_hi = np.percentile(mems, [2.5, 50.0, 97.5])
        out.append(
            BenchSummary(
                method=method,
                m=m,
                n_trials=len(rs),
                seconds_median=float(s_med),
                seconds_lo=float(s_lo),
                seconds_hi=float(s_hi),
                bytes_median=float(m_med),
                bytes_lo=float(m_lo),
                bytes_hi=float(m_hi),
            )
        )
    return out


def write_summary_csv(path, summary: Sequence[BenchSummary]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "method", "m", "n_trials",
                "seconds_median", "seconds_p2.5", "seconds_p97.5",
                "bytes_median", "bytes_p2.5", "bytes_p97.5",
            ]
        )
        for s in summary:
            writer.writerow(
                [
                    s.method, s.m, s.n_trials,
                    format(s.seconds_median, ".9e"), format(s.seconds_lo, ".9e"),
                    format(s.seconds_hi, ".9e"),
                    format(s.bytes_median, ".9e"), format(s.bytes_lo, ".9e"),
                    format(s.bytes_hi, ".9e"),
                ]
            )


def plot_bench(summary: Sequence[BenchSummary], path=None):
    """Two-panel figure (time, memory) on a log y-axis with 95% bands;
    returns the figure (saved as vector graphics when a path is given)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    methods = sorted({s.method for s in summary})
    fig, (ax_t, ax_m) = plt.subplots(1, 2, figsize=(10, 4))
    for method in methods:
        rows = sorted((s for s in summary if s.method == method), key=lambda s: s.m)
        ms = [s.m for s in rows]
        ax_t.plot(ms, [s.seconds_median for s in rows], marker="o", label=method)
        ax_t.fill_between(
            ms, [s.seconds_lo for s in rows], [s.seconds_hi for s in rows], alpha=0.2
        )
        mems = [max(s.bytes_median, 1.0) for s in rows]
        ax_m.plot(ms, mems, marker="o", label=method)
        ax_m.fill_between(
            ms,
            [max(s.bytes_lo, 1.0) for s in rows],
            [max(s.bytes_hi, 1.0) for s in rows],
            alpha=0.2,
        )
    for ax, ylabel in ((ax_t, "reconstruction time [s]"), (ax_m, "peak RSS growth [B]")):
        ax.set_xlabel("targets reconstructed")
        ax.set_ylabel(ylabel)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.legend()
    fig.tight_layout()
    if path is not None:
        fig.savefig(path)
    return fig
