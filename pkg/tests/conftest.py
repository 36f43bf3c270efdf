"""Shared builders for farm fixtures used across test modules."""

from __future__ import annotations

import numpy as np

from farmcast.dataset import FarmDataset, FarmMeta, parse_timestamp


def make_meta(
    farm_id: str = "farm001",
    terrain: str = "farmland",
    installed_power_kw: float = 1000.0,
    resolution_hours: int = 1,
    period_start: str = "2016-01-01T00:00:00Z",
    period_end: str = "2016-03-01T00:00:00Z",
) -> FarmMeta:
    return FarmMeta(
        farm_id=farm_id,
        terrain=terrain,
        installed_power_kw=installed_power_kw,
        resolution_hours=resolution_hours,
        period_start=parse_timestamp(period_start),
        period_end=parse_timestamp(period_end),
    )


def grid_timestamps(meta: FarmMeta, n: int, offset_steps: int = 0) -> np.ndarray:
    step = np.timedelta64(meta.resolution_hours * 3600, "s")
    start = meta.period_start + offset_steps * step
    return start + np.arange(n) * step


def make_grid_dataset(
    n: int = 96,
    meta: FarmMeta | None = None,
    seed: int = 0,
    feature_names: tuple[str, ...] = ("wind_speed", "temperature"),
) -> FarmDataset:
    """A gapless dataset on the meta grid with smooth random features."""
    meta = meta or make_meta()
    rng = np.random.default_rng(seed)
    timestamps = grid_timestamps(meta, n)
    features = np.column_stack(
        [np.cumsum(rng.normal(scale=0.3, size=n)) + 8.0 for _ in feature_names]
    )
    power = np.clip(
        meta.installed_power_kw * rng.uniform(0.0, 0.9, size=n),
        0.0,
        meta.installed_power_kw,
    )
    return FarmDataset(
        meta=meta,
        timestamps=timestamps,
        features=features,
        feature_names=feature_names,
        power=power,
    )
