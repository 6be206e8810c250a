"""Station-observation ingestion and seeded train/validation/test splits.

Input is a consolidated CSV (one row per station-day) with the header

    station_id,lat,lon,date,value_tenths_degC,qflag

where values are stored as integers in tenths of a degree Celsius and qflag
is one of valid/suspect/missing. Only valid records enter point clouds.
Splits are 60/20/20 by count (train rounded, validation takes the extra
point when the remainder is odd) using a per-date NumPy default_rng (PCG64)
seeded by hashing "<master_seed>:<date>", so membership is reproducible and
auditable date by date.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass
from datetime import date as _date

import numpy as np

from .domain import ClimatePointCloud

_log = logging.getLogger(__name__)

EXPECTED_HEADER = ["station_id", "lat", "lon", "date", "value_tenths_degC", "qflag"]
QFLAGS = ("valid", "suspect", "missing")
VALUE_OVERFLOW_C = 70.0
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


class ParseError(ValueError):
    """Malformed input file; the message names the file and line."""


class InsufficientDatesError(ValueError):
    """Fewer qualifying dates than requested."""


class TooFewObservationsError(ValueError):
    """A date has too few valid observations to split."""


@dataclass(frozen=True)
class StationRecord:
    station_id: str
    lat: float
    lon: float
    date: str          # ISO 8601 day
    value_c: float     # degC (converted from stored tenths)
    qflag: str
    line_no: int       # 1-based line in the source file, for error reporting


def read_station_file(path) -> list[StationRecord]:
    """Parse the consolidated CSV; raises ParseError naming the bad line.

    Records whose absolute value exceeds 70 degC are kept but re-flagged
    suspect (unit overflow guard against tenths/degrees mix-ups)."""
    records: list[StationRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file (missing header)")
        if [h.strip() for h in header] != EXPECTED_HEADER:
            raise ParseError(f"{path}: line 1: expected header {','.join(EXPECTED_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 6:
                raise ParseError(f"{path}: line {line_no}: expected 6 fields, got {len(row)}")
            sid, lat_s, lon_s, date_s, val_s, qflag = (c.strip() for c in row)
            try:
                lat = float(lat_s)
                lon = float(lon_s)
            except ValueError:
                raise ParseError(f"{path}: line {line_no}: bad coordinates {lat_s!r}, {lon_s!r}")
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                raise ParseError(f"{path}: line {line_no}: coordinates out of range")
            try:
                _date.fromisoformat(date_s)
            except ValueError:
                raise ParseError(f"{path}: line {line_no}: bad ISO date {date_s!r}")
            try:
                tenths = int(val_s)
            except ValueError:
                raise ParseError(f"{path}: line {line_no}: bad value {val_s!r} (tenths of degC)")
            if qflag not in QFLAGS:
                raise ParseError(f"{path}: line {line_no}: bad quality flag {qflag!r}")
            value_c = tenths / 10.0
            if abs(value_c) > VALUE_OVERFLOW_C and qflag == "valid":
                qflag = "suspect"
            records.append(StationRecord(sid, lat, lon, date_s, value_c, qflag, line_no))
    return records


def valid_counts_by_date(records: list[StationRecord]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for r in records:
        if r.qflag == "valid":
            counts[r.date] = counts.get(r.date, 0) + 1
    return counts


def select_dates(
    records: list[StationRecord],
    min_valid: int = 500,
    n: int = 100,
    seed: int = 0,
) -> list[str]:
    """Uniform sample (without replacement) of n dates whose valid-record
    count strictly exceeds min_valid; returned sorted."""
    counts = valid_counts_by_date(records)
    qualifying = sorted(d for d, c in counts.items() if c > min_valid)
    if len(qualifying) < n:
        raise InsufficientDatesError(
            f"only {len(qualifying)} dates have more than {min_valid} valid records; need {n}"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(qualifying), size=n, replace=False)
    return sorted(qualifying[i] for i in chosen)


def derive_date_seed(master_seed: int, date: str) -> int:
    """Per-date seed: first 8 bytes of sha256("<master>:<date>")."""
    digest = hashlib.sha256(f"{master_seed}:{date}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def split_sizes(n: int) -> tuple[int, int, int]:
    """(train, validation, test) counts: train = round(0.6 n), validation
    gets the extra point when the remainder is odd. 0.6 n can never land
    exactly on .5, so integer round-half-up is the plain rounding."""
    train = (6 * n + 5) // 10
    rem = n - train
    val = (rem + 1) // 2
    return train, val, rem - val


@dataclass(frozen=True)
class SplitSet:
    date: str
    train: ClimatePointCloud
    validation: ClimatePointCloud
    test: ClimatePointCloud
    seed: int
    labels: tuple[str, ...]              # per retained valid record, in input order
    records: tuple[StationRecord, ...]   # the retained valid records themselves
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS


def make_splits(date_records: list[StationRecord], seed: int) -> SplitSet:
    """Split one date's valid observations into disjoint train/val/test.

    Stations sharing coordinates within the cloud tolerance are dropped
    (first occurrence wins, warning logged) since duplicate nodes make the
    kriging system singular."""
    if not date_records:
        raise TooFewObservationsError("no records for this date")
    date = date_records[0].date
    if any(r.date != date for r in date_records):
        raise ValueError("make_splits expects records of a single date")
    valid = [r for r in date_records if r.qflag == "valid"]
    valid = _drop_duplicate_coords(valid)
    n = len(valid)
    if n < 5:
        raise TooFewObservationsError(f"{date}: {n} valid observations; need at least 5")

    n_train, n_val, n_test = split_sizes(n)
    rng = np.random.default_rng(derive_date_seed(seed, date))
    perm = rng.permutation(n)
    labels = [""] * n
    for pos, rec_idx in enumerate(perm):
        if pos < n_train:
            labels[rec_idx] = "train"
        elif pos < n_train + n_val:
            labels[rec_idx] = "val"
        else:
            labels[rec_idx] = "test"

    def cloud(name: str) -> ClimatePointCloud:
        rs = [r for r, lab in zip(valid, labels) if lab == name]
        return ClimatePointCloud(
            [r.lat for r in rs], [r.lon for r in rs], [r.value_c for r in rs]
        )

    return SplitSet(
        date=date,
        train=cloud("train"),
        validation=cloud("val"),
        test=cloud("test"),
        seed=seed,
        labels=tuple(labels),
        records=tuple(valid),
    )


def _drop_duplicate_coords(records: list[StationRecord]) -> list[StationRecord]:
    tol = 1e-9
    kept: list[StationRecord] = []
    cells: dict[tuple[int, int], list[int]] = {}
    for r in records:
        key = (math.floor(r.lat / tol), math.floor(r.lon / tol))
        dup = False
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for ki in cells.get((key[0] + di, key[1] + dj), ()):
                    other = kept[ki]
                    if abs(r.lat - other.lat) <= tol and abs(r.lon - other.lon) <= tol:
                        dup = True
                        break
                if dup:
                    break
            if dup:
                break
        if dup:
            _log.warning(
                "%s: station %s at (%s, %s) duplicates an earlier station; dropped",
                r.date, r.station_id, r.lat, r.lon,
            )
            continue
        cells.setdefault(key, []).append(len(kept))
        kept.append(r)
    return kept


SPLIT_HEADER = EXPECTED_HEADER + ["split"]
_SPLIT_NAMES = ("train", "val", "test")


def write_split_csv(path, records: list[StationRecord], labels: tuple[str, ...]) -> None:
    """One CSV per date: the retained valid records with their split label."""
    if len(records) != len(labels):
        raise ValueError("records and labels must align")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SPLIT_HEADER)
        for r, lab in zip(records, labels):
            writer.writerow(
                [r.station_id, format(r.lat, ".10f"), format(r.lon, ".10f"), r.date,
                 int(round(r.value_c * 10.0)), r.qflag, lab]
            )


def read_split_csv(path, subsets: tuple[str, ...] = _SPLIT_NAMES):
    """Load the requested subsets of one date's split file as point clouds.

    Callers name the subsets they need; the tuning stage must never ask for
    "test" (a test enforces this via this function)."""
    for s in subsets:
        if s not in _SPLIT_NAMES:
            raise ValueError(f"unknown subset {s!r}")
    rows: dict[str, list[tuple[float, float, float]]] = {s: [] for s in subsets}
    date = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            date = row["date"]
            lab = row["split"]
            if lab in rows:
                rows[lab].append(
                    (float(row["lat"]), float(row["lon"]), int(row["value_tenths_degC"]) / 10.0)
                )
    if date is None:
        raise ParseError(f"{path}: no rows")
    clouds = {}
    for s in subsets:
        pts = rows[s]
        if not pts:
            raise ParseError(f"{path}: subset {s!r} is empty")
        clouds[s] = ClimatePointCloud(
            [p[0] for p in pts], [p[1] for p in pts], [p[2] for p in pts]
        )
    return date, clouds


@dataclass(frozen=True)
class SplitSummary:
    split: str
    count: int
    min: float
    mean: float
    std: float
    max: float


def split_summary(splits: list[SplitSet]) -> list[SplitSummary]:
    """Pooled value statistics for train and validation only; the test split
    is deliberately excluded (leakage guard)."""
    out = []
    for name in ("train", "val"):
        total = 0
        s = 0.0
        s2 = 0.0
        vmin = math.inf
        vmax = -math.inf
        for sp in splits:
            values = sp.train.values if name == "train" else sp.validation.values
            total += values.size
            s += float(values.sum())
            s2 += float((values * values).sum())
            vmin = min(vmin, float(values.min()))
            vmax = max(vmax, float(values.max()))
        mean = s / total
        var = max(s2 / total - mean * mean, 0.0)
        out.append(
            SplitSummary(split=name, count=total, min=vmin, mean=mean, std=math.sqrt(var), max=vmax)
        )
    return out
