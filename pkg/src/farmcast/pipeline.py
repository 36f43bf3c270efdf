"""Rolling-test-window experiment runner.

Each farm's recorded period is cut into calendar-month test windows that
are disjoint and jointly cover the period; every run trains on the data
outside its window (split 80/20 into train/validation by a seeded
shuffle), grid-searches hyperparameters on validation MSE, retrains the
winner on train+validation, and predicts its test window. Concatenating
the test predictions of all runs yields an evaluation dataset with one
record per (timestamp, farm, family).

Leakage rules are structural: the standardizer used for grid search is
fit on the run's train rows only, the one used for the final model on
train+validation rows only, and both index sets are kept in the job log
so tests can re-derive the statistics and prove no test row was touched.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
import zlib
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .dataset import (
    FarmDataset,
    OutlierPolicy,
    add_months,
    apply_standardizer,
    compute_data_coverage,
    filter_outliers,
    fit_standardizer,
    format_timestamp,
    normalize_power,
    parse_timestamp,
    shift_features,
)
from .models import known_families, model_document
from .models import train as train_model

EVALUATION_HEADER = (
    "timestamp",
    "farm_id",
    "family",
    "run_index",
    "y_true",
    "y_pred",
    "squared_error",
)

FAMILY_ORDER = ("GBRT", "LASSO", "SVR", "MLP")


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RollingSplit:
    """Index sets of one run; test rows fall in [test_start, test_end)."""

    run_index: int
    test_start: np.datetime64
    test_end: np.datetime64
    train_indices: np.ndarray
    val_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self) -> None:
        for name in ("train_indices", "val_indices", "test_indices"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        sets = [set(self.train_indices), set(self.val_indices), set(self.test_indices)]
        total = len(sets[0]) + len(sets[1]) + len(sets[2])
        if len(sets[0] | sets[1] | sets[2]) != total:
            raise ValueError(f"run {self.run_index}: overlapping split index sets")


def make_rolling_splits(
    ds: FarmDataset, test_window_months: int, val_fraction: float, seed: int
) -> list[RollingSplit]:
    """Calendar-month windows over the farm's recorded period.

    The number of runs is ceil(period / window); a shorter final window is
    allowed, a period shorter than one window is not. Non-test rows are
    shuffled per run with a seeded generator and split
    (1 - val_fraction) / val_fraction.
    """
    if not (isinstance(test_window_months, int) and test_window_months >= 1):
        raise ValueError("test_window_months must be a positive integer")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")

    start = ds.meta.period_start
    end = ds.meta.period_end
    if end < add_months(start, test_window_months):
        raise ValueError(
            f"farm {ds.meta.farm_id!r}: recorded period is shorter than one"
            f" {test_window_months}-month test window"
        )
    boundaries = [start]
    k = 1
    while boundaries[-1] < end:
        boundaries.append(min(add_months(start, k * test_window_months), end))
        k += 1

    seconds = ds.timestamps.astype(np.int64)
    n = seconds.size
    everything = np.arange(n)
    splits = []
    for run_index, (w_start, w_end) in enumerate(zip(boundaries, boundaries[1:])):
        in_test = (seconds >= w_start.astype(np.int64)) & (seconds < w_end.astype(np.int64))
        test_idx = everything[in_test]
        rest = everything[~in_test]
        if rest.size < 2:
            raise ValueError(
                f"farm {ds.meta.farm_id!r}: run {run_index} leaves {rest.size}"
                " non-test samples, cannot form train and validation sets"
            )
        rng = np.random.default_rng([seed, run_index])
        perm = rng.permutation(rest.size)
        n_val = int(round(val_fraction * rest.size))
        n_val = min(max(n_val, 1), rest.size - 1)
        val_idx = np.sort(rest[perm[:n_val]])
        train_idx = np.sort(rest[perm[n_val:]])
        splits.append(
            RollingSplit(
                run_index=run_index,
                test_start=w_start,
                test_end=w_end,
                train_indices=train_idx,
                val_indices=val_idx,
                test_indices=test_idx,
            )
        )
    return splits


# ---------------------------------------------------------------------------
# hyperparameter grid
# ---------------------------------------------------------------------------

def _freeze_grid(space: dict) -> dict:
    out = {}
    for family, params in space.items():
        out[str(family)] = {str(k): tuple(v) for k, v in params.items()}
    return out


@dataclass(frozen=True)
class HyperGrid:
    """Per-family search space plus fixed (non-searched) trainer arguments.

    Candidates enumerate the Cartesian product of the searched lists in
    declaration order, so selection ties resolve identically everywhere.
    """

    space: dict[str, dict[str, tuple]]
    fixed: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self) -> None:
        space = _freeze_grid(self.space)
        if not space:
            raise ValueError("grid must cover at least one family")
        for family, params in space.items():
            if not params or any(len(v) == 0 for v in params.values()):
                raise ValueError(f"grid for {family} has an empty parameter list")
        fixed = {str(f): dict(p) for f, p in self.fixed.items()}
        for family, params in fixed.items():
            clash = set(params) & set(space.get(family, {}))
            if clash:
                raise ValueError(
                    f"fixed parameters {sorted(clash)} for {family} are also searched"
                )
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "fixed", fixed)

    @classmethod
    def default(cls) -> "HyperGrid":
        return cls(
            space={
                "LASSO": {"lam": (1e-4, 1e-3, 1e-2, 1e-1)},
                "SVR": {"C": (1.0, 10.0), "epsilon": (0.01, 0.05), "gamma": (0.1, 1.0)},
                "MLP": {"hidden_sizes": ((16,), (32, 16)), "learning_rate": (1e-3, 1e-2)},
                "GBRT": {"n_trees": (100, 300), "max_depth": (3, 5), "learning_rate": (0.05, 0.1)},
            }
        )

    def families(self) -> tuple[str, ...]:
        return tuple(self.space)

    def candidates(self, family: str) -> list[dict]:
        if family not in self.space:
            raise ValueError(f"grid defines no search space for family {family!r}")
        params = self.space[family]
        base = self.fixed.get(family, {})
        names = list(params)
        out = []
        for combo in product(*(params[k] for k in names)):
            candidate = dict(base)
            candidate.update(zip(names, combo))
            out.append(candidate)
        return out

    def to_dict(self) -> dict:
        return {
            "space": {f: {k: list(v) for k, v in p.items()} for f, p in self.space.items()},
            "fixed": {f: dict(p) for f, p in self.fixed.items()},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "HyperGrid":
        space = {
            f: {k: [tuple(x) if isinstance(x, list) else x for x in v] for k, v in p.items()}
            for f, p in raw["space"].items()
        }
        fixed = {
            f: {k: tuple(v) if isinstance(v, list) else v for k, v in p.items()}
            for f, p in raw.get("fixed", {}).items()
        }
        return cls(space=space, fixed=fixed)


@dataclass(frozen=True)
class GridSearchResult:
    family: str
    best_params: dict
    best_score: float
    table: tuple[tuple[dict, float], ...]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "best_params": _jsonable_params(self.best_params),
            "best_score": self.best_score,
            "table": [
                {"params": _jsonable_params(p), "score": s} for p, s in self.table
            ],
        }


def _jsonable_params(params: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}


def grid_search(
    family: str,
    grid: HyperGrid,
    train: tuple[np.ndarray, np.ndarray],
    validation: tuple[np.ndarray, np.ndarray],
    seed: int = 0,
) -> GridSearchResult:
    """Pick the candidate with the lowest validation MSE.

    Every candidate trains with the same seed. Candidates that diverge or
    score non-finite stay in the table as NaN but cannot win; ties go to
    the earliest enumeration. All candidates failing is an error.
    """
    X_train, y_train = train
    X_val, y_val = validation
    if y_val.size < 1:
        raise ValueError("validation set is empty")
    table: list[tuple[dict, float]] = []
    best: tuple[dict, float] | None = None
    for params in grid.candidates(family):
        try:
            model = train_model(family, X_train, y_train, params, seed)
            pred = model.predict(X_val)
            score = float(np.mean((pred - y_val) ** 2))
        except RuntimeError:
            score = math.nan
        if not math.isfinite(score):
            score = math.nan
        table.append((dict(params), score))
        if not math.isnan(score) and (best is None or score < best[1]):
            best = (dict(params), score)
    if best is None:
        raise ValueError(
            f"grid search for {family}: every candidate produced a non-finite"
            " validation score"
        )
    return GridSearchResult(
        family=family, best_params=best[0], best_score=best[1], table=tuple(table)
    )


# ---------------------------------------------------------------------------
# experiment configuration and logs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    test_window_months: int
    val_fraction: float = 0.2
    clip_predictions: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        if not (isinstance(self.test_window_months, int) and self.test_window_months >= 1):
            raise ValueError("test_window_months must be a positive integer")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass(frozen=True)
class JobLog:
    """Everything needed to audit one (farm, family, run) job offline.

    ``model_document`` is the serialized final model (retrained on
    train+validation); it is kept out of :meth:`to_dict` so grid-search
    logs stay small and the model can be written as its own artifact.
    """

    farm_id: str
    family: str
    run_index: int
    seed: int
    train_indices: tuple[int, ...]
    val_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    search_standardizer: dict
    retrain_standardizer: dict
    search: GridSearchResult
    model_document: dict

    def to_dict(self) -> dict:
        return {
            "farm_id": self.farm_id,
            "family": self.family,
            "run_index": self.run_index,
            "seed": self.seed,
            "train_indices": list(self.train_indices),
            "val_indices": list(self.val_indices),
            "test_indices": list(self.test_indices),
            "search_standardizer": self.search_standardizer,
            "retrain_standardizer": self.retrain_standardizer,
            "search": self.search.to_dict(),
        }


def job_seed(seed: int, farm_id: str, family: str, run_index: int) -> int:
    """Stable per-job training seed; collisions are harmless but distinct
    jobs should not share RNG streams by construction."""
    return zlib.crc32(f"{seed}|{farm_id}|{family}|{run_index}".encode())


# ---------------------------------------------------------------------------
# evaluation dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvaluationDataset:
    """One record per (timestamp, farm, family): y, prediction, e^2.

    ``farms`` maps farm id to the metadata analysis needs for binning:
    terrain, coverage, resolution_hours, installed_power_kw.
    """

    timestamps: np.ndarray
    farm_ids: np.ndarray
    families: np.ndarray
    run_indices: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    squared_error: np.ndarray
    farms: dict[str, dict]

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        farm_ids = np.asarray(self.farm_ids, dtype=str)
        families = np.asarray(self.families, dtype=str)
        runs = np.asarray(self.run_indices, dtype=np.int64)
        y = np.asarray(self.y_true, dtype=np.float64)
        pred = np.asarray(self.y_pred, dtype=np.float64)
        err = np.asarray(self.squared_error, dtype=np.float64)

        n = ts.size
        for name, arr in (
            ("farm_ids", farm_ids),
            ("families", families),
            ("run_indices", runs),
            ("y_true", y),
            ("y_pred", pred),
            ("squared_error", err),
        ):
            if arr.shape != (n,):
                raise ValueError(f"evaluation column {name} length mismatch")
        if n == 0:
            raise ValueError("evaluation dataset is empty")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(pred))):
            raise ValueError("evaluation contains non-finite values")
        if y.min() < 0.0 or y.max() > 1.0:
            raise ValueError("y_true outside [0, 1]; power must be normalized")
        if np.max(np.abs(err - (y - pred) ** 2)) > 1e-9:
            raise ValueError("squared_error disagrees with (y_true - y_pred)^2")
        missing = set(np.unique(farm_ids)) - set(self.farms)
        if missing:
            raise ValueError(f"records reference farms without metadata: {sorted(missing)}")

        order = np.lexsort((ts.astype(np.int64), runs, families, farm_ids))
        ts, farm_ids, families = ts[order], farm_ids[order], families[order]
        runs, y, pred, err = runs[order], y[order], pred[order], err[order]
        same = (
            (farm_ids[1:] == farm_ids[:-1])
            & (families[1:] == families[:-1])
            & (ts[1:] == ts[:-1])
        )
        if np.any(same):
            k = int(np.flatnonzero(same)[0])
            raise ValueError(
                f"duplicate record for ({format_timestamp(ts[k])},"
                f" {farm_ids[k]}, {families[k]})"
            )
        for name, arr in (
            ("timestamps", ts),
            ("farm_ids", farm_ids),
            ("families", families),
            ("run_indices", runs),
            ("y_true", y),
            ("y_pred", pred),
            ("squared_error", err),
        ):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_records(self) -> int:
        return int(self.timestamps.size)


@dataclass(frozen=True)
class ExperimentResult:
    evaluation: EvaluationDataset
    job_logs: tuple[JobLog, ...]


# ---------------------------------------------------------------------------
# preprocessing and the runner
# ---------------------------------------------------------------------------

def prepare_farm(
    ds: FarmDataset,
    shift_hours: int | None = None,
    policy: OutlierPolicy | None = None,
) -> FarmDataset:
    """Standard preprocessing chain: outlier filter, temporal feature
    shift, power normalization. The default shift is two hours at hourly
    resolution and one step (three hours) otherwise."""
    if shift_hours is None:
        shift_hours = 2 if ds.meta.resolution_hours == 1 else ds.meta.resolution_hours
    ds = filter_outliers(ds, policy or OutlierPolicy())
    if shift_hours:
        ds = shift_features(ds, list(ds.feature_names), shift_hours)
    return normalize_power(ds)


def _execute_job(
    ds: FarmDataset,
    split: RollingSplit,
    family: str,
    grid: HyperGrid,
    config: ExperimentConfig,
    seed: int,
) -> tuple:
    this_seed = job_seed(seed, ds.meta.farm_id, family, split.run_index)
    X, y = ds.features, ds.power
    tr, va, te = split.train_indices, split.val_indices, split.test_indices

    std_search = fit_standardizer(X[tr])
    search = grid_search(
        family,
        grid,
        (apply_standardizer(std_search, X[tr]), y[tr]),
        (apply_standardizer(std_search, X[va]), y[va]),
        seed=this_seed,
    )

    fit_idx = np.sort(np.concatenate([tr, va]))
    std_final = fit_standardizer(X[fit_idx])
    model = train_model(
        family, apply_standardizer(std_final, X[fit_idx]), y[fit_idx],
        search.best_params, this_seed,
    )
    if te.size:
        pred = model.predict(apply_standardizer(std_final, X[te]))
        if config.clip_predictions:
            pred = np.clip(pred, 0.0, 1.0)
    else:
        pred = np.empty(0)

    log = JobLog(
        farm_id=ds.meta.farm_id,
        family=family,
        run_index=split.run_index,
        seed=this_seed,
        train_indices=tuple(int(i) for i in tr),
        val_indices=tuple(int(i) for i in va),
        test_indices=tuple(int(i) for i in te),
        search_standardizer=std_search.to_dict(),
        retrain_standardizer=std_final.to_dict(),
        search=search,
        model_document=model_document(model),
    )
    return ds.timestamps[te], y[te], pred, log


def _run_job_guarded(ds, split, family, grid, config, seed):
    try:
        return ("ok", ds.meta.farm_id, family, split.run_index, _execute_job(ds, split, family, grid, config, seed))
    except Exception as exc:  # isolate farm failures; surfaced as warnings
        return ("error", ds.meta.farm_id, family, split.run_index, str(exc))


def run_experiment(
    farms: list[FarmDataset],
    families: list[str],
    grid: HyperGrid,
    config: ExperimentConfig,
    seed: int,
    coverage: dict[str, float] | None = None,
) -> ExperimentResult:
    """Full farm x family x run sweep producing the evaluation dataset.

    A failure in any job poisons its whole farm: the farm is dropped with
    a warning so surviving farms keep the one-record-per-cell shape. The
    experiment fails only when no farm survives.

    ``coverage`` optionally maps farm ids to their raw data coverage as
    measured before feature engineering. Lead/lag shifting drops every row
    with a missing neighbour, so coverage recomputed on the prepared rows
    understates the farm's actual availability; callers that prepared
    their farms should pass the pre-shift numbers.
    """
    if not farms:
        raise ValueError("no farms to evaluate")
    ids = [ds.meta.farm_id for ds in farms]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate farm ids in experiment input")
    coverage = dict(coverage) if coverage else {}
    for farm_id, value in coverage.items():
        if farm_id not in ids:
            raise ValueError(f"coverage override for unknown farm {farm_id!r}")
        if not (0.0 < float(value) <= 1.0):
            raise ValueError(f"coverage for farm {farm_id!r} must lie in (0, 1]")
    for ds in farms:
        if ds.power.min() < 0.0 or ds.power.max() > 1.0:
            raise ValueError(
                f"farm {ds.meta.farm_id!r}: power must be normalized to [0, 1]"
                " before running (see prepare_farm)"
            )
    families = list(families)
    if not families:
        raise ValueError("no model families requested")
    known = set(known_families())
    for family in families:
        if family not in known:
            raise ValueError(f"unknown model family {family!r}")
        if family not in grid.space:
            raise ValueError(f"grid defines no search space for family {family!r}")

    jobs = []
    for ds in farms:
        farm_seed = zlib.crc32(f"{seed}|{ds.meta.farm_id}".encode())
        try:
            splits = make_rolling_splits(
                ds, config.test_window_months, config.val_fraction, farm_seed
            )
        except ValueError as exc:
            jobs.append(("error", ds.meta.farm_id, "*", -1, str(exc)))
            continue
        for family in families:
            for split in splits:
                jobs.append((ds, split, family))

    pending = [j for j in jobs if not (isinstance(j, tuple) and j and j[0] == "error")]
    precomputed = [j for j in jobs if isinstance(j, tuple) and j and j[0] == "error"]
    if config.jobs > 1 and pending:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=config.jobs)(
            delayed(_run_job_guarded)(ds, split, family, grid, config, seed)
            for ds, split, family in pending
        )
    else:
        outcomes = [
            _run_job_guarded(ds, split, family, grid, config, seed)
            for ds, split, family in pending
        ]
    outcomes.extend(precomputed)

    failed: dict[str, str] = {}
    for outcome in outcomes:
        if outcome[0] == "error":
            _, farm_id, family, run_index, message = outcome
            failed.setdefault(farm_id, f"{family}/run{run_index}: {message}")
    for farm_id, message in sorted(failed.items()):
        warnings.warn(f"farm {farm_id} dropped from evaluation ({message})", stacklevel=2)

    ts_parts, farm_parts, family_parts, run_parts = [], [], [], []
    y_parts, pred_parts = [], []
    logs = []
    for outcome in outcomes:
        if outcome[0] != "ok" or outcome[1] in failed:
            continue
        _, farm_id, family, run_index, payload = outcome
        ts, y, pred, log = payload
        logs.append(log)
        if ts.size == 0:
            continue
        ts_parts.append(ts)
        farm_parts.append(np.full(ts.size, farm_id))
        family_parts.append(np.full(ts.size, family))
        run_parts.append(np.full(ts.size, run_index, dtype=np.int64))
        y_parts.append(y)
        pred_parts.append(pred)

    surviving = [ds for ds in farms if ds.meta.farm_id not in failed]
    if not surviving or not ts_parts:
        raise RuntimeError("every farm failed; no evaluation records produced")

    y_true = np.concatenate(y_parts)
    y_pred = np.concatenate(pred_parts)
    evaluation = EvaluationDataset(
        timestamps=np.concatenate(ts_parts),
        farm_ids=np.concatenate(farm_parts),
        families=np.concatenate(family_parts),
        run_indices=np.concatenate(run_parts),
        y_true=y_true,
        y_pred=y_pred,
        squared_error=(y_true - y_pred) ** 2,
        farms={
            ds.meta.farm_id: {
                "terrain": ds.meta.terrain,
                "coverage": coverage.get(ds.meta.farm_id, compute_data_coverage(ds)),
                "resolution_hours": ds.meta.resolution_hours,
                "installed_power_kw": ds.meta.installed_power_kw,
            }
            for ds in surviving
        },
    )
    logs.sort(key=lambda log: (log.farm_id, log.family, log.run_index))
    return ExperimentResult(evaluation=evaluation, job_logs=tuple(logs))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_evaluation(
    evaluation: EvaluationDataset, csv_path: str | Path, farms_path: str | Path | None = None
) -> None:
    """CSV with the record fields plus a farm-metadata JSON sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVALUATION_HEADER)
        for k in range(evaluation.n_records):
            writer.writerow(
                [
                    format_timestamp(evaluation.timestamps[k]),
                    evaluation.farm_ids[k],
                    evaluation.families[k],
                    int(evaluation.run_indices[k]),
                    repr(float(evaluation.y_true[k])),
                    repr(float(evaluation.y_pred[k])),
                    repr(float(evaluation.squared_error[k])),
                ]
            )
    if farms_path is None:
        farms_path = csv_path.with_name("farms.json")
    with open(farms_path, "w", encoding="utf-8") as fh:
        json.dump(evaluation.farms, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_evaluation(csv_path: str | Path, farms_path: str | Path | None = None) -> EvaluationDataset:
    csv_path = Path(csv_path)
    if farms_path is None:
        farms_path = csv_path.with_name("farms.json")
    with open(farms_path, encoding="utf-8") as fh:
        farms = json.load(fh)

    ts, farm_ids, families, runs, y, pred, err = [], [], [], [], [], [], []
    with open(csv_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != EVALUATION_HEADER:
            raise ValueError(f"{csv_path}: unexpected evaluation header {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(EVALUATION_HEADER):
                raise ValueError(f"{csv_path}:{row_no}: wrong column count")
            try:
                ts.append(parse_timestamp(row[0]))
                farm_ids.append(row[1])
                families.append(row[2])
                runs.append(int(row[3]))
                y.append(float(row[4]))
                pred.append(float(row[5]))
                err.append(float(row[6]))
            except ValueError as exc:
                raise ValueError(f"{csv_path}:{row_no}: {exc}") from exc
    if not ts:
        raise ValueError(f"{csv_path}: no evaluation records")
    return EvaluationDataset(
        timestamps=np.array(ts, dtype="datetime64[s]"),
        farm_ids=np.array(farm_ids, dtype=str),
        families=np.array(families, dtype=str),
        run_indices=np.array(runs, dtype=np.int64),
        y_true=np.array(y),
        y_pred=np.array(pred),
        squared_error=np.array(err),
        farms=farms,
    )
