"""Farm time-series ingestion and preprocessing.

A farm is a power time series on a fixed UTC grid plus numerical weather
prediction (NWP) feature columns. This module loads and validates the
on-disk formats (CSV time series, JSON metadata), applies rule-based
outlier filtering, computes data coverage, builds time-shifted feature
copies, normalizes power by the observed maximum, and standardizes
features for training.
"""

from __future__ import annotations

import calendar
import csv
import json
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = [
    "FarmMeta",
    "FarmDataset",
    "OutlierPolicy",
    "Standardizer",
    "TERRAINS",
    "add_months",
    "apply_standardizer",
    "compute_data_coverage",
    "filter_outliers",
    "fit_standardizer",
    "format_timestamp",
    "hour_of_day",
    "load_farm_meta",
    "load_farm_timeseries",
    "normalize_power",
    "parse_timestamp",
    "save_farm_meta",
    "save_farm_timeseries",
    "season_of",
    "shift_features",
]

TERRAINS = ("farmland", "forest", "offshore", "none")

# Feature-name fragments that indicate weather activity; used to decide
# whether a constant power run happened while the weather was moving.
ACTIVITY_NAME_FRAGMENTS = ("wind", "speed", "gust", "rad", "irr", "cloud", "elev")

_SECONDS_PER_HOUR = 3600


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------

def parse_timestamp(text: str) -> np.datetime64:
    """Parse an ISO-8601 UTC timestamp into a second-resolution datetime64.

    Accepts a trailing ``Z``, an explicit offset, or a naive timestamp
    (interpreted as UTC).
    """
    t = text.strip()
    if t.endswith(("Z", "z")):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return np.datetime64(int(dt.timestamp()), "s")


def format_timestamp(ts: np.datetime64) -> str:
    """Render a datetime64 as ISO-8601 UTC with a ``Z`` suffix."""
    return str(np.datetime_as_string(np.datetime64(ts, "s"), unit="s")) + "Z"


def hour_of_day(timestamps: np.ndarray) -> np.ndarray:
    """UTC hour (0..23) of each timestamp."""
    seconds = np.asarray(timestamps, dtype="datetime64[s]").astype(np.int64)
    return ((seconds // _SECONDS_PER_HOUR) % 24).astype(np.int64)


def month_of(timestamps: np.ndarray) -> np.ndarray:
    """Calendar month (1..12) of each timestamp."""
    months = np.asarray(timestamps, dtype="datetime64[M]").astype(np.int64)
    return (months % 12 + 1).astype(np.int64)


def season_of(timestamps: np.ndarray) -> np.ndarray:
    """Meteorological season: 1 = Dec-Feb, 2 = Mar-May, 3 = Jun-Aug, 4 = Sep-Nov."""
    months = month_of(timestamps)
    return ((months % 12) // 3 + 1).astype(np.int64)


def add_months(ts: np.datetime64, months: int) -> np.datetime64:
    """Shift a timestamp by whole calendar months (day clamped to month end)."""
    dt = np.datetime64(ts, "s").item()
    total = dt.month - 1 + months
    year = dt.year + total // 12
    month = total % 12 + 1
    day = min(dt.day, calendar.monthrange(year, month)[1])
    shifted = dt.replace(year=year, month=month, day=day)
    return np.datetime64(int(shifted.replace(tzinfo=timezone.utc).timestamp()), "s")


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FarmMeta:
    """Identity and recording contract of one farm.

    ``terrain`` accepts ``flatland`` as an alias of ``farmland``; PV farms
    use ``none``. ``period_end`` is exclusive: the maximum sample count of
    the farm is (period_end - period_start) / resolution_hours.
    """

    farm_id: str
    terrain: str
    installed_power_kw: float
    resolution_hours: int
    period_start: np.datetime64
    period_end: np.datetime64

    def __post_init__(self) -> None:
        if not self.farm_id:
            raise ValueError("farm_id must be non-empty")
        terrain = "farmland" if self.terrain == "flatland" else self.terrain
        if terrain not in TERRAINS:
            raise ValueError(
                f"farm {self.farm_id!r}: unknown terrain {self.terrain!r},"
                f" expected one of {TERRAINS} (or 'flatland')"
            )
        object.__setattr__(self, "terrain", terrain)
        if not (self.installed_power_kw > 0 and math.isfinite(self.installed_power_kw)):
            raise ValueError(
                f"farm {self.farm_id!r}: installed_power_kw must be positive"
            )
        if not (isinstance(self.resolution_hours, int) and self.resolution_hours > 0):
            raise ValueError(f"farm {self.farm_id!r}: resolution_hours must be a positive integer")
        if 24 % self.resolution_hours != 0:
            raise ValueError(
                f"farm {self.farm_id!r}: resolution_hours must divide 24,"
                f" got {self.resolution_hours}"
            )
        for name in ("period_start", "period_end"):
            value = getattr(self, name)
            if isinstance(value, str):
                value = parse_timestamp(value)
            object.__setattr__(self, name, np.datetime64(value, "s"))
        if not self.period_start < self.period_end:
            raise ValueError(f"farm {self.farm_id!r}: period_start must precede period_end")

    @property
    def max_samples(self) -> int:
        span = (self.period_end - self.period_start).astype(np.int64)
        return int(span // (self.resolution_hours * _SECONDS_PER_HOUR))

    def to_dict(self) -> dict:
        return {
            "farm_id": self.farm_id,
            "terrain": self.terrain,
            "installed_power_kw": self.installed_power_kw,
            "resolution_hours": self.resolution_hours,
            "period_start": format_timestamp(self.period_start),
            "period_end": format_timestamp(self.period_end),
        }


def _freeze(array: np.ndarray) -> np.ndarray:
    out = array.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FarmDataset:
    """Validated farm time series: grid-aligned timestamps, features, power.

    ``power_norm_kw`` is None while power is in kW and holds the
    normalization constant (observed maximum, kW) after
    :func:`normalize_power`. ``dropped_rows`` counts rows discarded during
    ingestion.
    """

    meta: FarmMeta
    timestamps: np.ndarray
    features: np.ndarray
    feature_names: tuple[str, ...]
    power: np.ndarray
    power_norm_kw: float | None = None
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        features = np.asarray(self.features, dtype=np.float64)
        power = np.asarray(self.power, dtype=np.float64)
        names = tuple(str(n) for n in self.feature_names)

        if timestamps.ndim != 1 or timestamps.size == 0:
            raise ValueError(f"farm {self.meta.farm_id!r}: empty dataset")
        n = timestamps.size
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(
                f"farm {self.meta.farm_id!r}: feature matrix shape {features.shape}"
                f" does not match {n} timestamps"
            )
        if len(names) != features.shape[1]:
            raise ValueError(
                f"farm {self.meta.farm_id!r}: {len(names)} feature names for"
                f" {features.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            raise ValueError(f"farm {self.meta.farm_id!r}: duplicate feature names")
        if power.shape != (n,):
            raise ValueError(f"farm {self.meta.farm_id!r}: power length mismatch")
        if not np.all(np.isfinite(features)) or not np.all(np.isfinite(power)):
            raise ValueError(f"farm {self.meta.farm_id!r}: non-finite values after ingestion")

        seconds = timestamps.astype(np.int64)
        if np.any(np.diff(seconds) <= 0):
            raise ValueError(f"farm {self.meta.farm_id!r}: timestamps not strictly increasing")
        start = self.meta.period_start.astype(np.int64)
        end = self.meta.period_end.astype(np.int64)
        step = self.meta.resolution_hours * _SECONDS_PER_HOUR
        if seconds[0] < start or seconds[-1] >= end:
            raise ValueError(
                f"farm {self.meta.farm_id!r}: timestamps outside the recorded period"
            )
        if np.any((seconds - start) % step != 0):
            raise ValueError(
                f"farm {self.meta.farm_id!r}: timestamps not aligned to the"
                f" {self.meta.resolution_hours} h grid"
            )
        if self.power_norm_kw is not None:
            if not (self.power_norm_kw > 0 and math.isfinite(self.power_norm_kw)):
                raise ValueError(f"farm {self.meta.farm_id!r}: invalid normalization constant")
            if power.min() < 0.0 or power.max() > 1.0:
                raise ValueError(
                    f"farm {self.meta.farm_id!r}: normalized power outside [0, 1]"
                )

        object.__setattr__(self, "timestamps", _freeze(timestamps))
        object.__setattr__(self, "features", _freeze(features))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "power", _freeze(power))

    @property
    def n_samples(self) -> int:
        return int(self.timestamps.size)

    def take(self, index: np.ndarray) -> "FarmDataset":
        """Row subset by sorted positional index (preserves all invariants)."""
        return replace(
            self,
            timestamps=self.timestamps[index],
            features=self.features[index],
            power=self.power[index],
        )


@dataclass(frozen=True)
class OutlierPolicy:
    """Rule-based replacement for manual outlier screening.

    Removes negative power (unless allowed), power above
    ``max_power_factor`` times the installed power, and constant power runs
    of at least ``max_constant_run`` time-contiguous samples during which
    some weather activity feature varies (stuck meters / curtailment).
    """

    max_constant_run: int = 24
    allow_negative: bool = False
    max_power_factor: float = 1.1

    def __post_init__(self) -> None:
        if not (isinstance(self.max_constant_run, int) and self.max_constant_run >= 2):
            raise ValueError("max_constant_run must be an integer >= 2")
        if not (self.max_power_factor >= 1.0):
            raise ValueError("max_power_factor must be >= 1")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map to zero mean and unit variance."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != std.shape:
            raise ValueError("mean and std must be 1-d vectors of equal length")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(std)):
            raise ValueError("standardizer parameters must be finite")
        if np.any(std <= 0.0):
            raise ValueError("standardizer std components must be positive")
        object.__setattr__(self, "mean", _freeze(mean))
        object.__setattr__(self, "std", _freeze(std))

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.mean.size:
            raise ValueError(
                f"expected {self.mean.size} feature columns, got shape {features.shape}"
            )
        return (features - self.mean) / self.std

    def inverse(self, transformed: np.ndarray) -> np.ndarray:
        transformed = np.asarray(transformed, dtype=np.float64)
        if transformed.ndim != 2 or transformed.shape[1] != self.mean.size:
            raise ValueError(
                f"expected {self.mean.size} feature columns, got shape {transformed.shape}"
            )
        return transformed * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def load_farm_meta(path: str | Path) -> FarmMeta:
    """Read the farm metadata JSON."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    required = (
        "farm_id",
        "terrain",
        "installed_power_kw",
        "resolution_hours",
        "period_start",
        "period_end",
    )
    missing = [k for k in required if k not in raw]
    if missing:
        raise ValueError(f"{path}: metadata missing keys {missing}")
    return FarmMeta(
        farm_id=str(raw["farm_id"]),
        terrain=str(raw["terrain"]),
        installed_power_kw=float(raw["installed_power_kw"]),
        resolution_hours=int(raw["resolution_hours"]),
        period_start=parse_timestamp(str(raw["period_start"])),
        period_end=parse_timestamp(str(raw["period_end"])),
    )


def save_farm_meta(meta: FarmMeta, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_farm_timeseries(path: str | Path, meta_path: str | Path) -> FarmDataset:
    """Load and validate one farm's time-series CSV and metadata JSON.

    Rows with unparseable timestamps or non-finite numbers are dropped and
    counted; duplicate timestamps keep the first occurrence (later ones
    count as dropped). Rows are sorted by time after ingestion.
    """
    path = Path(path)
    meta = load_farm_meta(meta_path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "timestamp" or header[-1] != "power":
            raise ValueError(
                f"{path}: header must be 'timestamp,<feature...>,power', got {header!r}"
            )
        feature_names = tuple(header[1:-1])

        seen: dict[int, None] = {}
        stamps: list[int] = []
        rows: list[list[float]] = []
        dropped = 0
        width = len(header)
        for row in reader:
            if len(row) != width:
                dropped += 1
                continue
            try:
                ts = parse_timestamp(row[0])
                values = [float(v) for v in row[1:]]
            except (ValueError, OverflowError):
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in values):
                dropped += 1
                continue
            key = int(ts.astype(np.int64))
            if key in seen:
                dropped += 1
                continue
            seen[key] = None
            stamps.append(key)
            rows.append(values)

    if not rows:
        raise ValueError(f"{path}: no valid rows after validation")
    order = np.argsort(np.asarray(stamps, dtype=np.int64), kind="stable")
    data = np.asarray(rows, dtype=np.float64)[order]
    timestamps = np.asarray(stamps, dtype=np.int64)[order].astype("datetime64[s]")
    try:
        return FarmDataset(
            meta=meta,
            timestamps=timestamps,
            features=data[:, :-1],
            feature_names=feature_names,
            power=data[:, -1],
            dropped_rows=dropped,
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def save_farm_timeseries(ds: FarmDataset, path: str | Path) -> None:
    """Write the time-series CSV this module reads (floats via repr, lossless)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *ds.feature_names, "power"])
        for i in range(ds.n_samples):
            writer.writerow(
                [
                    format_timestamp(ds.timestamps[i]),
                    *(repr(float(v)) for v in ds.features[i]),
                    repr(float(ds.power[i])),
                ]
            )


# ---------------------------------------------------------------------------
# preprocessing operations
# ---------------------------------------------------------------------------

def _activity_columns(ds: FarmDataset, explicit: list[str] | None) -> list[int]:
    if explicit is not None:
        unknown = [n for n in explicit if n not in ds.feature_names]
        if unknown:
            raise ValueError(f"unknown activity features {unknown}")
        return [ds.feature_names.index(n) for n in explicit]
    hits = [
        i
        for i, name in enumerate(ds.feature_names)
        if any(frag in name.lower() for frag in ACTIVITY_NAME_FRAGMENTS)
    ]
    return hits if hits else list(range(len(ds.feature_names)))


def filter_outliers(
    ds: FarmDataset,
    policy: OutlierPolicy = OutlierPolicy(),
    activity_features: list[str] | None = None,
) -> FarmDataset:
    """Remove outlier samples according to the policy; no imputation.

    Constant runs are detected over time-contiguous samples (consecutive
    stamps exactly one resolution step apart). Removal only widens time
    gaps, so a second application finds nothing new and the operation is
    idempotent.
    """
    power = ds.power
    n = ds.n_samples
    remove = np.zeros(n, dtype=bool)
    if not policy.allow_negative:
        remove |= power < 0.0
    ceiling = policy.max_power_factor * (
        1.0 if ds.power_norm_kw is not None else ds.meta.installed_power_kw
    )
    remove |= power > ceiling

    activity = _activity_columns(ds, activity_features)
    seconds = ds.timestamps.astype(np.int64)
    step = ds.meta.resolution_hours * _SECONDS_PER_HOUR
    linked = (power[1:] == power[:-1]) & (np.diff(seconds) == step)
    i = 0
    while i < n - 1:
        if not linked[i]:
            i += 1
            continue
        j = i
        while j < n - 1 and linked[j]:
            j += 1
        run_length = j - i + 1
        if run_length >= policy.max_constant_run:
            block = ds.features[i : j + 1][:, activity]
            varies = bool(np.any(block.max(axis=0) > block.min(axis=0)))
            if varies:
                remove[i : j + 1] = True
        i = j + 1

    keep = np.flatnonzero(~remove)
    if keep.size == 0:
        raise ValueError(f"farm {ds.meta.farm_id!r}: outlier filtering removed every sample")
    if keep.size == n:
        return ds
    return ds.take(keep)


def compute_data_coverage(ds: FarmDataset) -> float:
    """Fraction of the maximum possible sample count that is present."""
    total = ds.meta.max_samples
    if total <= 0:
        raise ValueError(f"farm {ds.meta.farm_id!r}: zero-length recording period")
    return min(1.0, max(0.0, ds.n_samples / total))


def shift_features(
    ds: FarmDataset, feature_subset: list[str], shift_hours: int
) -> FarmDataset:
    """Append lead/lag copies of selected features at every resolution step.

    For each named feature f and each k in {resolution, 2*resolution, ...,
    shift_hours}, adds columns ``f_lead_k`` (value at t+k) and ``f_lag_k``
    (value at t-k). Rows with any missing shifted value (period boundary or
    interior gap) are dropped; originals are retained.
    """
    if shift_hours == 0:
        return ds
    res = ds.meta.resolution_hours
    if shift_hours < 0 or shift_hours % res != 0:
        raise ValueError(
            f"shift_hours must be a non-negative multiple of the {res} h resolution"
        )
    unknown = [n for n in feature_subset if n not in ds.feature_names]
    if unknown:
        raise ValueError(f"unknown features {unknown}")

    seconds = ds.timestamps.astype(np.int64)
    n = ds.n_samples
    offsets = [k for k in range(res, shift_hours + 1, res)]

    def lookup(offset_hours: int) -> tuple[np.ndarray, np.ndarray]:
        target = seconds + offset_hours * _SECONDS_PER_HOUR
        pos = np.searchsorted(seconds, target)
        pos_clipped = np.minimum(pos, n - 1)
        found = seconds[pos_clipped] == target
        return pos_clipped, found

    new_columns: list[np.ndarray] = []
    new_names: list[str] = []
    valid = np.ones(n, dtype=bool)
    for name in feature_subset:
        col = ds.features[:, ds.feature_names.index(name)]
        for direction, sign in (("lead", +1), ("lag", -1)):
            for k in offsets:
                pos, found = lookup(sign * k)
                valid &= found
                new_columns.append(col[pos])
                new_names.append(f"{name}_{direction}_{k}")

    clash = set(new_names) & set(ds.feature_names)
    if clash:
        raise ValueError(f"shifted column names collide with existing features: {sorted(clash)}")
    keep = np.flatnonzero(valid)
    if keep.size == 0:
        raise ValueError(f"farm {ds.meta.farm_id!r}: no rows left after feature shifting")
    features = np.column_stack([ds.features, *new_columns])[keep]
    return replace(
        ds,
        timestamps=ds.timestamps[keep],
        features=features,
        feature_names=ds.feature_names + tuple(new_names),
        power=ds.power[keep],
    )


def normalize_power(ds: FarmDataset) -> FarmDataset:
    """Normalize power by the farm's observed maximum generation.

    The divisor is recorded as ``power_norm_kw`` (composed with any earlier
    normalization so the constant keeps its kW meaning).
    """
    if np.any(ds.power < 0.0):
        raise ValueError(
            f"farm {ds.meta.farm_id!r}: negative power present; filter outliers first"
        )
    peak = float(ds.power.max())
    if peak <= 0.0:
        raise ValueError(f"farm {ds.meta.farm_id!r}: all-zero power series")
    previous = ds.power_norm_kw if ds.power_norm_kw is not None else 1.0
    return replace(ds, power=ds.power / peak, power_norm_kw=previous * peak)


def fit_standardizer(features: np.ndarray) -> Standardizer:
    """Fit per-feature mean and population std; constant columns get std 1."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("cannot fit a standardizer on an empty matrix")
    if not np.all(np.isfinite(features)):
        raise ValueError("feature matrix contains non-finite values")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0.0] = 1.0
    return Standardizer(mean=mean, std=std)


def apply_standardizer(standardizer: Standardizer, features: np.ndarray) -> np.ndarray:
    return standardizer.transform(features)
