"""Faceted comparison of forecast-error distributions.

An evaluation dataset is cut into bins along one axis (data coverage,
hour of day, season, terrain, or model family), optionally after
filtering by terrain, coverage interval, or family. Each bin gets a
boxplot summary and a gamma fit; bins are compared pairwise with the
Kullback-Leibler divergence of the fits and the Kruskal-Wallis test,
plus one global Kruskal-Wallis test across all bins.

Conventions fixed here because the rest of the toolchain depends on
them: the KLD matrix stores KL(row || col) in the upper triangle with a
zero diagonal; coverage bins are half-open ten-point bins on rounded
percent, [50,60) up to [90,100], farms below 50% are excluded with a
warning; season 1 is winter (Dec-Feb).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import TERRAINS, hour_of_day, season_of
from .pipeline import FAMILY_ORDER, EvaluationDataset
from .stats import ErrorSample, GammaFit, KwResult, fit_gamma, kld_gamma, kruskal_wallis

FACET_KINDS = ("coverage_decile", "hour_of_day", "season", "terrain", "model_family")

COVERAGE_LABELS = ("50-60%", "60-70%", "70-80%", "80-90%", "90-100%")

LOW_SAMPLE_N = 30


# ---------------------------------------------------------------------------
# facets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Facet:
    """A binning axis plus an optional record filter.

    The filter narrows which records enter the bins: ``terrain`` and
    ``coverage_range`` act on the record's farm metadata (coverage bounds
    inclusive), ``family`` on the record's model family.
    """

    kind: str
    terrain: str | None = None
    coverage_range: tuple[float, float] | None = None
    family: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in FACET_KINDS:
            raise ValueError(f"facet kind must be one of {FACET_KINDS}, got {self.kind!r}")
        if self.terrain is not None and self.terrain not in TERRAINS:
            raise ValueError(f"unknown terrain filter {self.terrain!r}")
        if self.coverage_range is not None:
            lo, hi = self.coverage_range
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"coverage_range must satisfy 0 <= lo <= hi <= 1, got {self.coverage_range}")
            object.__setattr__(self, "coverage_range", (float(lo), float(hi)))
        if self.family is not None and not self.family:
            raise ValueError("family filter must be non-empty")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.terrain is not None:
            out["terrain"] = self.terrain
        if self.coverage_range is not None:
            out["coverage_range"] = list(self.coverage_range)
        if self.family is not None:
            out["family"] = self.family
        return out

    @classmethod
    def from_filters(cls, kind: str, filters: dict[str, str] | None = None) -> "Facet":
        """Build a facet from CLI-style key=value filters.

        Recognized keys: ``terrain``, ``family`` and ``coverage`` with an
        inclusive ``lo:hi`` fraction range (e.g. ``coverage=0.9:1.0``).
        """
        kwargs: dict = {}
        for key, value in (filters or {}).items():
            if key == "terrain":
                kwargs["terrain"] = value
            elif key == "family":
                kwargs["family"] = value
            elif key == "coverage":
                parts = value.split(":")
                if len(parts) != 2:
                    raise ValueError(
                        f"coverage filter must look like lo:hi, got {value!r}"
                    )
                kwargs["coverage_range"] = (float(parts[0]), float(parts[1]))
            else:
                raise ValueError(f"unknown filter key {key!r}")
        return cls(kind=kind, **kwargs)


def _filter_mask(ev: EvaluationDataset, facet: Facet) -> np.ndarray:
    mask = np.ones(ev.n_records, dtype=bool)
    if facet.family is not None:
        mask &= ev.families == facet.family
    if facet.terrain is not None or facet.coverage_range is not None:
        terrain_ok = {}
        coverage_ok = {}
        for farm_id, info in ev.farms.items():
            terrain_ok[farm_id] = facet.terrain is None or info["terrain"] == facet.terrain
            if facet.coverage_range is None:
                coverage_ok[farm_id] = True
            else:
                lo, hi = facet.coverage_range
                coverage_ok[farm_id] = lo <= info["coverage"] <= hi
        allowed = {f for f in ev.farms if terrain_ok[f] and coverage_ok[f]}
        mask &= np.isin(ev.farm_ids, sorted(allowed))
    return mask


def coverage_bin(coverage: float) -> int | None:
    """Ten-point bin index on rounded percent; None below 50%."""
    percent = int(round(coverage * 100.0))
    if percent < 50:
        return None
    if percent >= 100:
        return len(COVERAGE_LABELS) - 1
    return min((percent - 50) // 10, len(COVERAGE_LABELS) - 1)


def bin_records(ev: EvaluationDataset, facet: Facet) -> tuple[list[ErrorSample], int]:
    """Split the (filtered) records into labeled squared-error samples.

    Returns the non-empty bins in canonical order plus the count of
    records excluded by the filter or by facet rules (coverage < 50%).
    Every record lands in exactly one bin or the excluded count.
    """
    mask = _filter_mask(ev, facet)
    errors = ev.squared_error
    excluded = int(ev.n_records - mask.sum())

    if facet.kind == "coverage_decile":
        labels: list[str] = []
        parts: list[np.ndarray] = []
        below = 0
        farm_bins = {f: coverage_bin(info["coverage"]) for f, info in ev.farms.items()}
        for b, label in enumerate(COVERAGE_LABELS):
            in_bin = {f for f, fb in farm_bins.items() if fb == b}
            sel = mask & np.isin(ev.farm_ids, sorted(in_bin))
            if sel.any():
                labels.append(label)
                parts.append(errors[sel])
        dropped_farms = sorted(f for f, fb in farm_bins.items() if fb is None)
        if dropped_farms:
            sel = mask & np.isin(ev.farm_ids, dropped_farms)
            below = int(sel.sum())
            if below:
                warnings.warn(
                    f"{len(dropped_farms)} farm(s) below 50% coverage excluded"
                    f" from the coverage facet ({below} records)",
                    stacklevel=2,
                )
        excluded += below
        samples = [ErrorSample(p, label=l) for l, p in zip(labels, parts)]
    elif facet.kind == "hour_of_day":
        resolutions = {
            ev.farms[f]["resolution_hours"]
            for f in np.unique(ev.farm_ids[mask])
        }
        if len(resolutions) > 1:
            raise ValueError(
                f"hour facet needs a single time resolution, found {sorted(resolutions)}"
            )
        hours = hour_of_day(ev.timestamps)
        samples = []
        for h in sorted(set(hours[mask].tolist())):
            sel = mask & (hours == h)
            samples.append(ErrorSample(errors[sel], label=str(h)))
    elif facet.kind == "season":
        seasons = season_of(ev.timestamps)
        samples = []
        for s in (1, 2, 3, 4):
            sel = mask & (seasons == s)
            if sel.any():
                samples.append(ErrorSample(errors[sel], label=str(s)))
    elif facet.kind == "terrain":
        samples = []
        for terrain in TERRAINS:
            farms = sorted(f for f, i in ev.farms.items() if i["terrain"] == terrain)
            sel = mask & np.isin(ev.farm_ids, farms)
            if sel.any():
                samples.append(ErrorSample(errors[sel], label=terrain))
    elif facet.kind == "model_family":
        present = set(np.unique(ev.families[mask]))
        ordered = [f for f in FAMILY_ORDER if f in present]
        ordered += sorted(present - set(FAMILY_ORDER))
        samples = []
        for family in ordered:
            sel = mask & (ev.families == family)
            samples.append(ErrorSample(errors[sel], label=family))
    else:  # unreachable, Facet validates kind
        raise ValueError(f"unhandled facet kind {facet.kind!r}")
    counted = sum(s.n for s in samples)
    if counted + excluded != ev.n_records:
        raise AssertionError(
            f"facet {facet.kind!r}: {counted} binned + {excluded} excluded"
            f" != {ev.n_records} records"
        )
    return samples, excluded


# ---------------------------------------------------------------------------
# summaries and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinSummary:
    """Boxplot numbers for one bin, 1.5 IQR whisker convention.

    ``minimum``/``maximum`` are the whisker ends (most extreme samples
    inside the fences, never retreating past the box), ``whisker_low``/
    ``whisker_high`` the fences themselves.
    """

    label: str
    n: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float
    whisker_low: float
    whisker_high: float
    low_sample: bool

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("bin summary needs at least one value")
        if not self.minimum <= self.q1 <= self.median <= self.q3 <= self.maximum:
            raise ValueError(f"bin {self.label!r}: unordered box statistics")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "min": self.minimum,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.maximum,
            "mean": self.mean,
            "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high,
            "low_sample": self.low_sample,
        }


def boxplot_summary(sample: ErrorSample) -> BinSummary:
    values = sample.values
    q1, median, q3 = (float(v) for v in np.percentile(values, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    # the whisker never retreats past the box edge
    minimum = min(float(inside.min()), q1) if inside.size else q1
    maximum = max(float(inside.max()), q3) if inside.size else q3
    return BinSummary(
        label=sample.label,
        n=sample.n,
        minimum=minimum,
        q1=q1,
        median=median,
        q3=q3,
        maximum=maximum,
        mean=float(values.mean()),
        whisker_low=lo_fence,
        whisker_high=hi_fence,
        low_sample=sample.n < LOW_SAMPLE_N,
    )


@dataclass(frozen=True)
class AnalysisReport:
    """Everything one facet comparison produced, ready to serialize.

    ``kld[i][j]`` holds KL(bin_i || bin_j) for i < j, 0.0 on and below
    the diagonal, and None where a bin's gamma fit failed (degenerate
    sample). ``kw_pairwise`` lists (label_a, label_b, KwResult) for every
    i < j pair.
    """

    facet: Facet
    alpha: float
    excluded_records: int
    bins: tuple[BinSummary, ...]
    fits: tuple[GammaFit | None, ...]
    kld: tuple[tuple[float | None, ...], ...]
    kw_global: KwResult
    kw_pairwise: tuple[tuple[str, str, KwResult], ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.bins)

    def to_dict(self) -> dict:
        return {
            "facet": self.facet.to_dict(),
            "alpha": self.alpha,
            "excluded_records": self.excluded_records,
            "bins": [
                {**b.to_dict(), "gamma_fit": None if f is None else f.to_dict()}
                for b, f in zip(self.bins, self.fits)
            ],
            "kld": [list(row) for row in self.kld],
            "kruskal_wallis": {
                "global": _kw_dict(self.kw_global),
                "pairwise": [
                    {"a": a, "b": b, **_kw_dict(kw)} for a, b, kw in self.kw_pairwise
                ],
            },
        }


def _kw_dict(kw: KwResult) -> dict:
    out = kw.to_dict()
    for key in ("h", "p_value"):
        if isinstance(out[key], float) and math.isnan(out[key]):
            out[key] = None
    return out


def facet_report(ev: EvaluationDataset, facet: Facet, alpha: float = 0.05) -> AnalysisReport:
    """Bin, summarize, fit, and compare along one facet.

    Degenerate bins (all values equal) keep their boxplot summary but get
    no gamma fit; KLD cells touching them are None. Needs at least two
    non-empty bins.
    """
    samples, excluded = bin_records(ev, facet)
    if len(samples) < 2:
        raise ValueError(
            f"facet {facet.kind!r} produced {len(samples)} non-empty bin(s);"
            " need at least two to compare"
        )
    bins = tuple(boxplot_summary(s) for s in samples)
    fits: list[GammaFit | None] = []
    for s in samples:
        try:
            fits.append(fit_gamma(s))
        except ValueError:
            fits.append(None)

    n = len(samples)
    kld_rows = []
    for i in range(n):
        row: list[float | None] = []
        for j in range(n):
            if j <= i:
                row.append(0.0)
            elif fits[i] is None or fits[j] is None:
                row.append(None)
            else:
                row.append(kld_gamma(fits[i], fits[j]))
        kld_rows.append(tuple(row))

    kw_global = kruskal_wallis([s.values for s in samples], alpha=alpha)
    pairwise = []
    for i in range(n):
        for j in range(i + 1, n):
            kw = kruskal_wallis([samples[i].values, samples[j].values], alpha=alpha)
            pairwise.append((samples[i].label, samples[j].label, kw))

    return AnalysisReport(
        facet=facet,
        alpha=alpha,
        excluded_records=excluded,
        bins=bins,
        fits=tuple(fits),
        kld=tuple(kld_rows),
        kw_global=kw_global,
        kw_pairwise=tuple(pairwise),
    )


def model_comparison_report(
    ev: EvaluationDataset,
    terrain: str | None = None,
    coverage_range: tuple[float, float] | None = None,
    alpha: float = 0.05,
) -> AnalysisReport:
    """Family-versus-family comparison, optionally restricted to a
    terrain or coverage interval (the smallest-error regimes expose the
    differences between the learners)."""
    facet = Facet(kind="model_family", terrain=terrain, coverage_range=coverage_range)
    return facet_report(ev, facet, alpha=alpha)


def standard_facets(ev: EvaluationDataset) -> list[Facet]:
    """The facets that make sense for this evaluation: every kind that
    yields at least two non-empty bins, each family-filtered when several
    families are present (plus the family facet itself, unfiltered)."""
    families = sorted(set(np.unique(ev.families)))
    per_family: list[str | None] = [None]
    if len(families) > 1:
        per_family = list(families)
    facets = []
    for kind in ("coverage_decile", "hour_of_day", "season", "terrain"):
        for family in per_family:
            facet = Facet(kind=kind, family=family)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    samples, _ = bin_records(ev, facet)
            except ValueError:
                continue
            if len(samples) >= 2:
                facets.append(facet)
    if len(families) > 1:
        facets.append(Facet(kind="model_family"))
    return facets


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def report_name(facet: Facet) -> str:
    """Stable file stem for a facet report."""
    parts = [facet.kind]
    if facet.family:
        parts.append(facet.family.lower())
    if facet.terrain:
        parts.append(facet.terrain)
    if facet.coverage_range:
        lo, hi = facet.coverage_range
        parts.append(f"cov{round(lo * 100)}_{round(hi * 100)}")
    return "_".join(parts)


def save_report_json(report: AnalysisReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _cell(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def save_report_csvs(report: AnalysisReport, out_dir: str | Path, stem: str | None = None) -> list[Path]:
    """Plot-ready CSV views: boxplot rows, the KLD matrix, pairwise KW."""
    out_dir = Path(out_dir)
    stem = stem or report_name(report.facet)
    labels = report.labels
    written = []

    path = out_dir / f"{stem}_boxplot.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["label", "n", "mean", "min", "q1", "median", "q3", "max",
             "whisker_low", "whisker_high", "low_sample"]
        )
        for b in report.bins:
            writer.writerow(
                [b.label, b.n, _cell(b.mean), _cell(b.minimum), _cell(b.q1),
                 _cell(b.median), _cell(b.q3), _cell(b.maximum),
                 _cell(b.whisker_low), _cell(b.whisker_high), int(b.low_sample)]
            )
    written.append(path)

    path = out_dir / f"{stem}_kld.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(labels))
        for label, row in zip(labels, report.kld):
            writer.writerow([label] + [_cell(v) for v in row])
    written.append(path)

    path = out_dir / f"{stem}_kw_pairwise.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "b", "h", "p_value", "significant"])
        for a, b, kw in report.kw_pairwise:
            significant = "" if math.isnan(kw.p_value) else int(kw.significant)
            writer.writerow(
                [a, b,
                 "" if math.isnan(kw.h) else repr(float(kw.h)),
                 "" if math.isnan(kw.p_value) else repr(float(kw.p_value)),
                 significant]
            )
    written.append(path)
    return written
