"""Seeded synthetic farm generator with planted, controllable structure.

Every dataset is produced from a latent weather process plus noise whose
scale is steered by terrain, season and forecast horizon, so downstream
analyses have known effects to detect:

  * features are the latent truth plus noise growing with the hours since
    the 12:00 UTC forecast origin (horizon effect),
  * observation noise is scaled per terrain (farmland < offshore < forest)
    and per season (wind worst in winter/autumn, PV worst in summer),
  * PV power is an annual/diurnal clear-sky envelope times a cloud
    process and is exactly zero at night,
  * a stratified per-farm target inside ``coverage_range`` decides how
    many samples are randomly removed.

Generation is fully deterministic per (seed, farm_index).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dataset import (
    TERRAINS,
    FarmDataset,
    FarmMeta,
    compute_data_coverage,
    hour_of_day,
    parse_timestamp,
    save_farm_meta,
    save_farm_timeseries,
    season_of,
)

KINDS = ("wind", "pv")

# terrain multipliers for observation noise; farmland is the reference
DEFAULT_TERRAIN_NOISE = {"farmland": 1.0, "forest": 1.9, "offshore": 1.4, "none": 1.0}

# wind errors peak in winter (1) and autumn (4), PV in summer (3)
DEFAULT_SEASON_NOISE = {
    "wind": {1: 1.7, 2: 1.05, 3: 0.75, 4: 1.35},
    "pv": {1: 0.75, 2: 1.15, 3: 1.5, 4: 0.95},
}

DEFAULT_FARM_COUNTS = {
    "wind": {"farmland": 37, "forest": 11, "offshore": 4},
    "pv": {"none": 114},
}

_INSTALLED_RANGE_KW = (500.0, 3000.0)
_RATED_WIND_SPEED = 12.0  # m/s; cubic power curve saturates here


@dataclass(frozen=True)
class SynthConfig:
    """Fleet-level recipe; every farm derives from it plus its index."""

    kind: str
    n_farms: dict[str, int]
    period_start: np.datetime64
    period_end: np.datetime64
    resolution_hours: int
    seed: int
    coverage_range: tuple[float, float] = (0.5, 1.0)
    base_obs_noise: float = 0.9  # wind: m/s on speed; pv: relative cloud swing
    feature_noise: float = 0.45  # same units as the latent the feature copies
    horizon_growth: float = 0.04  # relative noise increase per horizon hour
    terrain_noise: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_TERRAIN_NOISE)
    )
    season_noise: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_SEASON_NOISE["wind"])
    )

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        farms = {str(t): int(c) for t, c in self.n_farms.items()}
        for terrain, count in farms.items():
            if terrain not in TERRAINS:
                raise ValueError(f"unknown terrain {terrain!r} in n_farms")
            if count < 0:
                raise ValueError(f"negative farm count for terrain {terrain!r}")
        if sum(farms.values()) < 1:
            raise ValueError("n_farms must request at least one farm")
        object.__setattr__(self, "n_farms", farms)
        start = (
            parse_timestamp(self.period_start)
            if isinstance(self.period_start, str)
            else np.datetime64(self.period_start, "s")
        )
        end = (
            parse_timestamp(self.period_end)
            if isinstance(self.period_end, str)
            else np.datetime64(self.period_end, "s")
        )
        if end <= start:
            raise ValueError("period_end must be after period_start")
        object.__setattr__(self, "period_start", start)
        object.__setattr__(self, "period_end", end)
        if not (
            isinstance(self.resolution_hours, int)
            and self.resolution_hours > 0
            and 24 % self.resolution_hours == 0
        ):
            raise ValueError("resolution_hours must be a positive divisor of 24")
        lo, hi = (float(v) for v in self.coverage_range)
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"coverage_range must satisfy 0 <= lo <= hi <= 1, got {self.coverage_range}")
        if lo == 0.0:
            raise ValueError("coverage_range lower bound must be positive")
        object.__setattr__(self, "coverage_range", (lo, hi))
        for name in ("base_obs_noise", "feature_noise"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.horizon_growth < 0.0:
            raise ValueError("horizon_growth must be non-negative")
        terrain_noise = {str(t): float(v) for t, v in self.terrain_noise.items()}
        season_noise = {int(s): float(v) for s, v in self.season_noise.items()}
        for terrain in farms:
            if terrain_noise.get(terrain, 0.0) <= 0.0:
                raise ValueError(f"terrain_noise must be positive for {terrain!r}")
        if set(season_noise) != {1, 2, 3, 4} or any(v <= 0.0 for v in season_noise.values()):
            raise ValueError("season_noise needs positive entries for seasons 1-4")
        object.__setattr__(self, "terrain_noise", terrain_noise)
        object.__setattr__(self, "season_noise", season_noise)

    @property
    def total_farms(self) -> int:
        return sum(self.n_farms.values())

    @property
    def n_samples(self) -> int:
        span = int(self.period_end.astype(np.int64) - self.period_start.astype(np.int64))
        return span // (self.resolution_hours * 3600)

    @classmethod
    def default(cls, kind: str, seed: int, **overrides) -> "SynthConfig":
        """Fleet defaults per kind: hourly two-year wind, 3-hourly PV."""
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        base = dict(
            kind=kind,
            n_farms=dict(DEFAULT_FARM_COUNTS[kind]),
            period_start=parse_timestamp("2016-01-01T00:00:00Z"),
            period_end=parse_timestamp("2017-12-31T00:00:00Z"),
            resolution_hours=1 if kind == "wind" else 3,
            seed=seed,
            season_noise=dict(DEFAULT_SEASON_NOISE[kind]),
        )
        if kind == "pv":
            base["base_obs_noise"] = 0.18
            base["feature_noise"] = 0.015
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        from .dataset import format_timestamp

        return {
            "kind": self.kind,
            "n_farms": dict(self.n_farms),
            "period_start": format_timestamp(self.period_start),
            "period_end": format_timestamp(self.period_end),
            "resolution_hours": self.resolution_hours,
            "seed": self.seed,
            "coverage_range": list(self.coverage_range),
            "base_obs_noise": self.base_obs_noise,
            "feature_noise": self.feature_noise,
            "horizon_growth": self.horizon_growth,
            "terrain_noise": dict(self.terrain_noise),
            "season_noise": {str(k): v for k, v in self.season_noise.items()},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        data = dict(raw)
        kind = data.pop("kind")
        seed = int(data.pop("seed"))
        if "period_start" in data:
            data["period_start"] = parse_timestamp(data["period_start"])
        if "period_end" in data:
            data["period_end"] = parse_timestamp(data["period_end"])
        if "coverage_range" in data:
            data["coverage_range"] = tuple(data["coverage_range"])
        if "season_noise" in data:
            data["season_noise"] = {int(k): float(v) for k, v in data["season_noise"].items()}
        if "resolution_hours" in data:
            data["resolution_hours"] = int(data["resolution_hours"])
        # route through the kind defaults so a pv config without explicit
        # season_noise gets the pv multipliers, not the wind ones
        return cls.default(kind, seed, **data)


def load_synth_config(path: str | Path) -> SynthConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return SynthConfig.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: invalid synth config: {exc}") from exc


def terrain_of_farm(cfg: SynthConfig, farm_index: int) -> str:
    """Terrains are assigned in canonical order by contiguous index blocks."""
    if not 0 <= farm_index < cfg.total_farms:
        raise ValueError(
            f"farm_index {farm_index} outside the fleet of {cfg.total_farms}"
        )
    offset = farm_index
    for terrain in TERRAINS:
        count = cfg.n_farms.get(terrain, 0)
        if offset < count:
            return terrain
        offset -= count
    raise AssertionError("unreachable: counts were validated")


def coverage_target(cfg: SynthConfig, farm_index: int, jitter: float) -> float:
    """Stratified draw: farm i lands in slot i of an n-way split of the
    coverage range, so every fleet spreads over the whole range instead of
    clumping. ``jitter`` is the farm's own uniform [0,1) draw."""
    lo, hi = cfg.coverage_range
    return lo + (hi - lo) * (farm_index + jitter) / cfg.total_farms


def _ar1(rng_eps: np.ndarray, phi: float, sigma: float) -> np.ndarray:
    """Stationary AR(1) driven by the given standard normal draws."""
    init = rng_eps[0] * sigma / math.sqrt(1.0 - phi * phi)
    driven = sigma * rng_eps.copy()
    driven[0] = init
    return lfilter([1.0], [1.0, -phi], driven)


def _wind_farm(
    cfg: SynthConfig,
    rng: np.random.Generator,
    hours: np.ndarray,
    doy: np.ndarray,
    season_mult: np.ndarray,
    terrain_mult: float,
    installed: float,
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...], np.ndarray]:
    n = hours.size
    annual = 8.0 + 2.5 * np.cos(2.0 * np.pi * (doy - 15.0) / 365.0)
    latent = annual + _ar1(rng.standard_normal(n), phi=0.95, sigma=0.55)
    latent = np.maximum(latent, 0.05)

    obs_eps = rng.standard_normal(n)
    observed = latent + cfg.base_obs_noise * terrain_mult * season_mult * obs_eps
    observed = np.maximum(observed, 0.0)
    power = installed * np.minimum((observed / _RATED_WIND_SPEED) ** 3, 1.0)

    horizon_mult = 1.0 + cfg.horizon_growth * hours  # origin 12:00 UTC, lead 12+h
    temperature = 10.0 + 9.0 * np.cos(2.0 * np.pi * (doy - 200.0) / 365.0)
    features = np.column_stack(
        [
            latent + cfg.feature_noise * horizon_mult * rng.standard_normal(n),
            1.3 * latent + 1.5 * cfg.feature_noise * horizon_mult * rng.standard_normal(n),
            temperature + 1.2 * horizon_mult * rng.standard_normal(n),
        ]
    )
    names = ("nwp_wind_speed", "nwp_wind_gust", "nwp_temperature")
    return power, features, names, latent


def _pv_farm(
    cfg: SynthConfig,
    rng: np.random.Generator,
    hours: np.ndarray,
    doy: np.ndarray,
    season_mult: np.ndarray,
    installed: float,
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...], np.ndarray]:
    n = hours.size
    phase = 2.0 * np.pi * (doy - 172.0) / 365.0
    day_length = 12.0 + 4.0 * np.cos(phase)
    sunrise = 12.0 - day_length / 2.0
    lit = (hours > sunrise) & (hours < sunrise + day_length)
    envelope = np.zeros(n)
    envelope[lit] = np.sin(np.pi * (hours[lit] - sunrise[lit]) / day_length[lit])
    amplitude = 0.65 + 0.35 * (1.0 + np.cos(phase)) / 2.0

    # slow cloudiness is forecastable and enters the latent truth; the fast
    # component never reaches the features, so it is the planted model error
    slow = _ar1(rng.standard_normal(n), phi=0.9, sigma=0.1)
    cloudiness = np.clip(0.75 + slow, 0.15, 1.0)
    latent = envelope * amplitude * cloudiness

    fast_eps = rng.standard_normal(n)
    frac = np.clip(latent * (1.0 + cfg.base_obs_noise * season_mult * fast_eps), 0.0, 1.0)
    power = installed * frac

    horizon_mult = 1.0 + cfg.horizon_growth * hours
    temperature = 10.0 + 9.0 * np.cos(2.0 * np.pi * (doy - 200.0) / 365.0)
    features = np.column_stack(
        [
            latent + cfg.feature_noise * horizon_mult * rng.standard_normal(n),
            (1.0 - cloudiness) + 2.0 * cfg.feature_noise * horizon_mult * rng.standard_normal(n),
            temperature + 1.2 * horizon_mult * rng.standard_normal(n),
        ]
    )
    names = ("nwp_irradiance", "nwp_cloud_cover", "nwp_temperature")
    return power, features, names, latent


def generate_farm(
    cfg: SynthConfig, farm_index: int, with_truth: bool = False
) -> FarmDataset | tuple[FarmDataset, dict]:
    """One deterministic farm; index decides terrain and coverage slot.

    With ``with_truth`` the latent series and per-sample horizon (hours
    since the 12:00 UTC forecast origin) come back alongside, on the same
    rows as the dataset, for property checks against the ground truth.
    """
    terrain = terrain_of_farm(cfg, farm_index)
    rng = np.random.default_rng([cfg.seed, farm_index])

    installed = float(np.round(rng.uniform(*_INSTALLED_RANGE_KW), -1))
    target = coverage_target(cfg, farm_index, float(rng.uniform()))

    step = cfg.resolution_hours * 3600
    n = cfg.n_samples
    start_s = cfg.period_start.astype(np.int64)
    timestamps = (start_s + step * np.arange(n)).astype("datetime64[s]")
    hours = hour_of_day(timestamps).astype(np.float64)
    day_index = (timestamps.astype(np.int64) - start_s) // 86400
    first_doy = int(
        (cfg.period_start - cfg.period_start.astype("datetime64[Y]").astype("datetime64[s]"))
        .astype(np.int64)
        // 86400
    )
    doy = ((first_doy + day_index) % 365).astype(np.float64) + 1.0
    season_mult = np.array([cfg.season_noise[s] for s in season_of(timestamps)])

    if cfg.kind == "wind":
        power, features, names, latent = _wind_farm(
            cfg, rng, hours, doy, season_mult, cfg.terrain_noise[terrain], installed
        )
    else:
        power, features, names, latent = _pv_farm(
            cfg, rng, hours, doy, season_mult, installed
        )

    n_remove = int(round((1.0 - target) * n))
    if n_remove >= n:
        raise ValueError(
            f"coverage target {target:.3f} leaves no samples for farm {farm_index}"
        )
    removed = rng.choice(n, size=n_remove, replace=False)
    keep = np.setdiff1d(np.arange(n), removed)

    meta = FarmMeta(
        farm_id=f"{cfg.kind}{farm_index:03d}",
        terrain=terrain,
        installed_power_kw=installed,
        resolution_hours=cfg.resolution_hours,
        period_start=cfg.period_start,
        period_end=cfg.period_end,
    )
    ds = FarmDataset(
        meta=meta,
        timestamps=timestamps[keep],
        features=features[keep],
        feature_names=names,
        power=power[keep],
    )
    if not with_truth:
        return ds
    truth = {
        "latent": latent[keep],
        "horizon_hours": 12.0 + hours[keep],
        "coverage_target": target,
    }
    return ds, truth


def generate_fleet(cfg: SynthConfig) -> list[FarmDataset]:
    return [generate_farm(cfg, i) for i in range(cfg.total_farms)]


def _write_one(cfg: SynthConfig, farm_index: int, out_dir: str) -> dict:
    ds = generate_farm(cfg, farm_index)
    out = Path(out_dir)
    save_farm_timeseries(ds, out / f"{ds.meta.farm_id}.csv")
    save_farm_meta(ds.meta, out / f"{ds.meta.farm_id}.meta.json")
    return {
        "farm_id": ds.meta.farm_id,
        "terrain": ds.meta.terrain,
        "coverage": compute_data_coverage(ds),
        "resolution_hours": ds.meta.resolution_hours,
        "installed_power_kw": ds.meta.installed_power_kw,
        "n_samples": ds.n_samples,
    }


def write_fleet(cfg: SynthConfig, out_dir: str | Path, jobs: int = 1) -> list[dict]:
    """Generate every farm, write CSV + meta files and a fleet index.

    Returns one summary row per farm (sorted by farm_id); the same rows
    land in ``farms.json`` keyed by farm id.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    indices = range(cfg.total_farms)
    if jobs > 1:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=jobs)(
            delayed(_write_one)(cfg, i, str(out)) for i in indices
        )
    else:
        rows = [_write_one(cfg, i, str(out)) for i in indices]
    rows.sort(key=lambda r: r["farm_id"])
    index = {
        row["farm_id"]: {k: v for k, v in row.items() if k != "farm_id"}
        for row in rows
    }
    with open(out / "farms.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows
