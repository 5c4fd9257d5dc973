"""Wi-Fi connection logs to supervised occupancy-prediction tasks.

Connection logs are held as a pandas DataFrame with columns
``ap_id, building, mac, timestamp`` (timestamp at minute resolution).
The on-disk CSV layout is ``ap_id,date,time,mac,building`` with
``date`` as ``YYYY-MM-DD`` and ``time`` as ``HH:MM``.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["ap_id", "date", "time", "mac", "building"]
FRAME_COLUMNS = ["ap_id", "building", "mac", "timestamp"]
DAY_NAMES = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]
HORIZONS = (15, 30, 60)
LAGS_MINUTES = (15, 30)

Location = tuple  # (ap_id, building)


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ConnectionRecord:
    ap_id: str
    timestamp: dt.datetime
    mac: str
    building: str


def records_frame(records: Iterable[ConnectionRecord]) -> pd.DataFrame:
    records = list(records)
    frame = pd.DataFrame({
        "ap_id": [r.ap_id for r in records],
        "building": [r.building for r in records],
        "mac": [r.mac for r in records],
        "timestamp": pd.to_datetime([r.timestamp for r in records]).astype("datetime64[ns]"),
    }, columns=FRAME_COLUMNS)
    return frame


def iter_records(frame: pd.DataFrame) -> Iterable[ConnectionRecord]:
    for ap, b, mac, ts in zip(frame["ap_id"], frame["building"], frame["mac"],
                              frame["timestamp"]):
        yield ConnectionRecord(ap, ts.to_pydatetime(), mac, b)


# --------------------------------------------------------------------------
# CSV input/output
# --------------------------------------------------------------------------

@dataclass
class IngestResult:
    records: pd.DataFrame
    # (line number, reason) for every skipped row
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def skipped_count(self) -> int:
        return len(self.skipped)


def ingest_csv(path) -> IngestResult:
    """Read a connection log; malformed rows are skipped and reported."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    cols = {c: [] for c in CSV_COLUMNS}
    lines = []
    skipped = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataFormatError(f"{path}: missing columns {missing}")
        index = [header.index(c) for c in CSV_COLUMNS]
        width = len(header)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                skipped.append((line, f"expected {width} fields, got {len(row)}"))
                continue
            values = [row[i].strip() for i in index]
            empty = [c for c, v in zip(CSV_COLUMNS, values) if not v]
            if empty:
                skipped.append((line, f"empty field(s) {empty}"))
                continue
            for c, v in zip(CSV_COLUMNS, values):
                cols[c].append(v)
            lines.append(line)

    stamps = pd.to_datetime(pd.Series(cols["date"], dtype=object) + " "
                            + pd.Series(cols["time"], dtype=object),
                            format="%Y-%m-%d %H:%M", errors="coerce")
    bad = stamps.isna().to_numpy()
    for i in np.flatnonzero(bad):
        skipped.append((lines[i], f"unparseable date/time {cols['date'][i]!r} {cols['time'][i]!r}"))
    skipped.sort()
    keep = ~bad
    frame = pd.DataFrame({
        "ap_id": np.asarray(cols["ap_id"], dtype=object)[keep],
        "building": np.asarray(cols["building"], dtype=object)[keep],
        "mac": np.asarray(cols["mac"], dtype=object)[keep],
        "timestamp": stamps[keep].to_numpy(dtype="datetime64[ns]"),
    }, columns=FRAME_COLUMNS)
    for line, reason in skipped:
        logger.warning("%s:%d skipped: %s", path, line, reason)
    if frame.empty:
        raise DataFormatError(f"{path}: no valid rows")
    return IngestResult(frame, skipped)


def _format_timestamps(ts: np.ndarray, fmt: str) -> np.ndarray:
    uniq, inverse = np.unique(ts, return_inverse=True)
    labels = pd.DatetimeIndex(uniq).strftime(fmt).to_numpy(dtype=object)
    return labels[inverse]


def write_csv(frame: pd.DataFrame, path) -> None:
    """Write a connection log in the documented CSV layout."""
    ts = frame["timestamp"].to_numpy(dtype="datetime64[ns]")
    out = pd.DataFrame({
        "ap_id": frame["ap_id"].to_numpy(),
        "date": _format_timestamps(ts, "%Y-%m-%d"),
        "time": _format_timestamps(ts, "%H:%M"),
        "mac": frame["mac"].to_numpy(),
        "building": frame["building"].to_numpy(),
    }, columns=CSV_COLUMNS)
    out.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Synthetic generator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Synthetic campus log parameters.

    ``base_rate`` is the peak number of connection events per minute at an
    AP with scale 1.0 on a day with weekly factor 1.0. ``weekly_profile`` is
    indexed Monday..Sunday.
    """

    n_buildings: int = 2
    aps_per_building: int = 3
    weeks: int = 6
    base_rate: float = 20.0
    seed: int = 0
    start: str = "2016-01-15"
    devices_per_ap: int = 300
    night_level: float = 0.05
    day_start_hour: float = 7.0
    day_end_hour: float = 20.0
    weekly_profile: tuple = (0.85, 1.0, 1.0, 0.95, 0.6, 0.18, 0.12)
    ap_scale_range: tuple = (0.6, 1.0)

    def __post_init__(self):
        if min(self.n_buildings, self.aps_per_building, self.weeks, self.devices_per_ap) < 1:
            raise ValueError("building, AP, week and device counts must be positive")
        if not self.base_rate > 0:
            raise ValueError("base_rate must be positive")
        if len(self.weekly_profile) != 7 or min(self.weekly_profile) < 0:
            raise ValueError("weekly_profile needs 7 non-negative factors")
        if not 0 <= self.night_level <= 1:
            raise ValueError("night_level must lie in [0, 1]")
        if not 0 <= self.day_start_hour < self.day_end_hour <= 24:
            raise ValueError("need 0 <= day_start_hour < day_end_hour <= 24")
        lo, hi = self.ap_scale_range
        if not 0 < lo <= hi:
            raise ValueError("ap_scale_range must be positive and ordered")

    @property
    def n_aps(self) -> int:
        return self.n_buildings * self.aps_per_building

    @property
    def minutes(self) -> int:
        return self.weeks * 7 * 1440


def ap_names(config: SynthConfig) -> list[tuple[str, str]]:
    """(ap_id, building) for every AP, building-major."""
    return [(f"B{b + 1:02d}-AP{a + 1:02d}", f"B{b + 1:02d}")
            for b in range(config.n_buildings) for a in range(config.aps_per_building)]


def ap_scales(config: SynthConfig) -> np.ndarray:
    rng = np.random.default_rng([config.seed, 1])
    return rng.uniform(*config.ap_scale_range, size=config.n_aps)


def diurnal_factor(minute_of_day, config: SynthConfig) -> np.ndarray:
    """Night floor plus a half-sine hump between the day start and end hours."""
    m = np.asarray(minute_of_day, dtype=float)
    a, b = config.day_start_hour * 60, config.day_end_hour * 60
    hump = np.where((m >= a) & (m <= b), np.sin(np.pi * (m - a) / (b - a)), 0.0)
    return config.night_level + (1 - config.night_level) * np.maximum(hump, 0.0)


def intensity(config: SynthConfig) -> np.ndarray:
    """Per-minute event rate, shape ``(n_aps, minutes)``."""
    minute = np.arange(config.minutes)
    first_dow = dt.date.fromisoformat(config.start).weekday()
    dow = (first_dow + minute // 1440) % 7
    weekly = np.asarray(config.weekly_profile, dtype=float)[dow]
    shape = config.base_rate * weekly * diurnal_factor(minute % 1440, config)
    return ap_scales(config)[:, None] * shape[None, :]


def _mac_pool(building: int, size: int) -> np.ndarray:
    return np.array([f"02:00:{building:02x}:{(d >> 16) & 255:02x}:{(d >> 8) & 255:02x}:{d & 255:02x}"
                     for d in range(size)], dtype=object)


def synth_generate(config: SynthConfig) -> pd.DataFrame:
    """Connection log from an inhomogeneous Poisson process per AP.

    Each event picks a device uniformly from the AP's pool. Pools of
    neighbouring APs in a building overlap, so devices roam and re-associate.
    """
    lam = intensity(config)
    rng = np.random.default_rng([config.seed, 2])
    counts = rng.poisson(lam)
    ap_idx, minute = np.nonzero(counts)
    reps = counts[ap_idx, minute]
    ap_idx = np.repeat(ap_idx, reps)
    minute = np.repeat(minute, reps)

    k = config.aps_per_building
    pool_size = config.devices_per_ap * (k + 1) // 2
    stride = max(pool_size // k, 1)
    local = rng.integers(0, config.devices_per_ap, size=ap_idx.size)
    building_idx = ap_idx // k
    device = (ap_idx % k * stride + local) % pool_size

    macs = np.empty(ap_idx.size, dtype=object)
    for b in range(config.n_buildings):
        sel = building_idx == b
        macs[sel] = _mac_pool(b + 1, pool_size)[device[sel]]

    names = ap_names(config)
    ap_ids = np.array([n[0] for n in names], dtype=object)
    buildings = np.array([n[1] for n in names], dtype=object)
    start = np.datetime64(config.start, "m")
    stamps = (start + minute.astype("timedelta64[m]")).astype("datetime64[ns]")
    order = np.lexsort((ap_idx, minute))
    return pd.DataFrame({
        "ap_id": ap_ids[ap_idx][order],
        "building": buildings[ap_idx][order],
        "mac": macs[order],
        "timestamp": stamps[order],
    }, columns=FRAME_COLUMNS).reset_index(drop=True)


# --------------------------------------------------------------------------
# Day-of-week partition and occupancy series
# --------------------------------------------------------------------------

def split_by_day_of_week(frame: pd.DataFrame) -> dict[int, pd.DataFrame]:
    """Partition by weekday, 0 = Monday .. 6 = Sunday; all seven keys present."""
    dow = frame["timestamp"].dt.dayofweek.to_numpy()
    return {d: frame[dow == d] for d in range(7)}


@dataclass
class OccupancySeries:
    location: Location
    bucket_minutes: int
    starts: np.ndarray  # datetime64[ns], strictly increasing
    counts: np.ndarray  # int64, distinct MACs per bucket

    def __len__(self):
        return len(self.starts)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"ap_id": self.location[0], "building": self.location[1],
                             "bucket_start": self.starts, "count": self.counts})


def bucket_counts(frame: pd.DataFrame, bucket_minutes: int = 15) -> dict[Location, OccupancySeries]:
    """Distinct MACs per location per bucket.

    Every location gets a bucket for every slot of every calendar date that
    appears anywhere in ``frame``; slots without records count zero.
    """
    if bucket_minutes < 1 or 60 % bucket_minutes:
        raise ValueError("bucket_minutes must divide 60")
    if frame.empty:
        return {}
    ts = frame["timestamp"]
    width = pd.Timedelta(minutes=bucket_minutes)
    grouped = (frame.assign(bucket=ts.dt.floor(width))
               .groupby(["ap_id", "building", "bucket"], sort=True)["mac"].nunique())
    dates = np.unique(ts.dt.normalize().to_numpy())
    per_day = 1440 // bucket_minutes
    offsets = np.arange(per_day) * np.timedelta64(bucket_minutes, "m")
    slots = (dates[:, None] + offsets[None, :]).ravel().astype("datetime64[ns]")
    slot_index = pd.DatetimeIndex(slots)

    series = {}
    for (ap, b), sub in grouped.groupby(level=[0, 1], sort=True):
        counts = sub.droplevel([0, 1]).reindex(slot_index, fill_value=0)
        series[(ap, b)] = OccupancySeries((ap, b), bucket_minutes, slots.copy(),
                                          counts.to_numpy(dtype=np.int64))
    return series


def write_series_csv(series: Mapping[Location, OccupancySeries], path) -> None:
    frames = [s.to_frame() for _, s in sorted(series.items())]
    out = (pd.concat(frames, ignore_index=True) if frames
           else pd.DataFrame(columns=["ap_id", "building", "bucket_start", "count"]))
    out["bucket_start"] = pd.to_datetime(out["bucket_start"]).dt.strftime("%Y-%m-%d %H:%M")
    out.to_csv(path, index=False, lineterminator="\n")


# --------------------------------------------------------------------------
# Supervised sets
# --------------------------------------------------------------------------

@dataclass
class SupervisedSet:
    X: np.ndarray
    y: np.ndarray
    timestamps: np.ndarray  # datetime64[ns] of the row's (current) bucket
    location_codes: np.ndarray
    locations: list
    feature_names: tuple
    horizon_minutes: int

    def __len__(self):
        return len(self.y)

    def subset(self, mask) -> "SupervisedSet":
        return SupervisedSet(self.X[mask], self.y[mask], self.timestamps[mask],
                             self.location_codes[mask], self.locations, self.feature_names,
                             self.horizon_minutes)

    def to_frame(self) -> pd.DataFrame:
        cols = {
            "timestamp": pd.DatetimeIndex(self.timestamps).strftime("%Y-%m-%d %H:%M"),
            "ap_id": [self.locations[c][0] for c in self.location_codes],
            "building": [self.locations[c][1] for c in self.location_codes],
        }
        for j, name in enumerate(self.feature_names):
            cols[name] = self.X[:, j] if len(self) else np.empty(0)
        cols["target"] = self.y
        return pd.DataFrame(cols)

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def feature_names(locations) -> tuple:
    onehot = [f"loc_{ap}_{b}" for ap, b in locations]
    return tuple(onehot + ["tod_sin", "tod_cos", "day_of_week", "count"]
                 + [f"lag_{m}" for m in LAGS_MINUTES])


def empty_supervised(locations, horizon_minutes: int) -> SupervisedSet:
    names = feature_names(locations)
    return SupervisedSet(np.empty((0, len(names))), np.empty(0, dtype=np.int64),
                         np.empty(0, dtype="datetime64[ns]"), np.empty(0, dtype=np.int64),
                         list(locations), names, horizon_minutes)


def build_supervised(series: Mapping[Location, OccupancySeries],
                     horizon_minutes: int) -> SupervisedSet:
    """One row per bucket whose +horizon bucket exists in the same series.

    Features: location one-hot, minute-of-day as (sin, cos), day of week,
    the bucket's count and the counts 15 and 30 minutes earlier. A lag
    bucket missing from the series counts as zero. Nothing after the row's
    own bucket enters its features.
    """
    if not series:
        raise ValueError("no series given")
    if horizon_minutes < 1:
        raise ValueError("horizon must be positive")
    widths = {s.bucket_minutes for s in series.values()}
    if len(widths) != 1:
        raise ValueError("series have different bucket widths")
    width = widths.pop()
    if horizon_minutes % width:
        raise ValueError(f"bucket width {width} does not divide horizon {horizon_minutes}")

    locations = sorted(series)
    names = feature_names(locations)
    horizon = np.timedelta64(horizon_minutes, "m")
    blocks = []
    for code, loc in enumerate(locations):
        s = series[loc]
        index = pd.DatetimeIndex(s.starts)
        target_pos = index.get_indexer(index + pd.Timedelta(horizon))
        rows = np.flatnonzero(target_pos >= 0)
        if rows.size == 0:
            continue
        starts = index[rows]
        lags = []
        for lag in LAGS_MINUTES:
            pos = index.get_indexer(starts - pd.Timedelta(minutes=lag))
            lags.append(np.where(pos >= 0, s.counts[pos], 0))
        minute = (starts.hour * 60 + starts.minute).to_numpy()
        angle = 2 * np.pi * minute / 1440
        onehot = np.zeros((rows.size, len(locations)))
        onehot[:, code] = 1.0
        X = np.column_stack([onehot, np.sin(angle), np.cos(angle),
                             starts.dayofweek.to_numpy(), s.counts[rows]] + lags).astype(float)
        blocks.append((X, s.counts[target_pos[rows]], starts.to_numpy(),
                       np.full(rows.size, code)))
    if not blocks:
        raise ValueError("series too short to form any row at this horizon")
    return SupervisedSet(
        X=np.vstack([b[0] for b in blocks]),
        y=np.concatenate([b[1] for b in blocks]).astype(np.int64),
        timestamps=np.concatenate([b[2] for b in blocks]).astype("datetime64[ns]"),
        location_codes=np.concatenate([b[3] for b in blocks]).astype(np.int64),
        locations=locations,
        feature_names=names,
        horizon_minutes=horizon_minutes,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Weeks are counted in 7-day blocks from ``anchor`` (default: first row's date)."""

    day_of_week: int | None = None
    train_weeks: int = 5
    test_week: int = 6
    anchor: str | None = None

    def __post_init__(self):
        if self.day_of_week is not None and not 0 <= self.day_of_week <= 6:
            raise ValueError("day_of_week must be in 0..6")
        if not 1 <= self.train_weeks < self.test_week:
            raise ValueError("test week must come after the training weeks")


def week_index(timestamps: np.ndarray, anchor) -> np.ndarray:
    days = (pd.DatetimeIndex(timestamps).normalize() - pd.Timestamp(anchor).normalize()).days
    return np.asarray(days // 7)


def split_train_test(data: SupervisedSet, spec: SplitSpec = SplitSpec()
                     ) -> tuple[SupervisedSet, SupervisedSet]:
    if spec.day_of_week is not None:
        data = data.subset(pd.DatetimeIndex(data.timestamps).dayofweek == spec.day_of_week)
    if len(data) == 0:
        raise ValueError("no rows to split")
    anchor = spec.anchor if spec.anchor is not None else data.timestamps.min()
    week = week_index(data.timestamps, anchor)
    train_mask = (week >= 0) & (week < spec.train_weeks)
    test_mask = week == spec.test_week - 1
    if not test_mask.any():
        raise ValueError(f"rows span fewer than {spec.test_week} weeks")
    if not train_mask.any():
        raise ValueError("no rows fall in the training weeks")
    return data.subset(train_mask), data.subset(test_mask)


def expected_events_per_bucket(config: SynthConfig, bucket_minutes: int = 15) -> np.ndarray:
    """Intensity integrated over each bucket, shape ``(n_aps, n_buckets)``."""
    lam = intensity(config)
    return lam.reshape(config.n_aps, -1, bucket_minutes).sum(axis=2)


def table_shape(frame: pd.DataFrame) -> dict[str, int]:
    """Record count per weekday name."""
    parts = split_by_day_of_week(frame)
    return {DAY_NAMES[d]: len(p) for d, p in parts.items()}
