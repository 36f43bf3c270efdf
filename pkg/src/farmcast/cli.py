"""Command-line entry points: synth, run, analyze, report.

Every command is deterministic for a given config and seed; there is no
wall-clock seeding anywhere, so a seed must always be supplied (flag or
config file). Flags override config values. All options can also come
from FARMCAST_* environment variables (e.g. FARMCAST_RUN_JOBS=4).
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click

from . import __version__
from .analysis import (
    Facet,
    facet_report,
    report_name,
    save_report_csvs,
    save_report_json,
    standard_facets,
)
from .dataset import compute_data_coverage, load_farm_timeseries
from .pipeline import (
    ExperimentConfig,
    HyperGrid,
    load_evaluation,
    prepare_farm,
    run_experiment,
    save_evaluation,
)
from .synth import SynthConfig, generate_fleet, load_synth_config, write_fleet

FACET_ALIASES = {
    "coverage": "coverage_decile",
    "coverage_decile": "coverage_decile",
    "hour": "hour_of_day",
    "hour_of_day": "hour_of_day",
    "season": "season",
    "terrain": "terrain",
    "model": "model_family",
    "model_family": "model_family",
}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Declarative experiment description read from a JSON file.

    Exactly one of ``input_dir`` (a directory of farm CSV + meta files)
    or ``synth`` (an inline synthetic-fleet config) provides the farms.
    """

    seed: int
    test_window_months: int
    out_dir: str
    input_dir: str | None = None
    synth: SynthConfig | None = None
    families: tuple[str, ...] = ("GBRT", "LASSO", "SVR", "MLP")
    grid: HyperGrid = dataclasses.field(default_factory=HyperGrid.default)
    val_fraction: float = 0.2
    clip_predictions: bool = True
    alpha: float = 0.05
    shift_hours: int | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.seed is None:
            raise ValueError("seed is required; there is no wall-clock default")
        if (self.input_dir is None) == (self.synth is None):
            raise ValueError("exactly one of input_dir or synth must be given")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.families:
            raise ValueError("families must be non-empty")
        object.__setattr__(self, "families", tuple(self.families))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        data = dict(raw)
        if "synth" in data and data["synth"] is not None:
            data["synth"] = SynthConfig.from_dict(data["synth"])
        if "grid" in data and data["grid"] is not None:
            data["grid"] = HyperGrid.from_dict(data["grid"])
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**data)


def load_run_config(path: str | Path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return RunConfig.from_dict(raw)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid run config {path}: {exc}") from exc


def load_farm_directory(input_dir: str | Path) -> list:
    """Load every farm CSV in a directory; each needs a sibling meta file."""
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise ValueError(f"input directory {input_dir} does not exist")
    csv_paths = sorted(input_dir.glob("*.csv"))
    if not csv_paths:
        raise ValueError(f"no farm CSV files in {input_dir}")
    farms = []
    for csv_path in csv_paths:
        meta_path = csv_path.with_name(csv_path.stem + ".meta.json")
        if not meta_path.exists():
            raise ValueError(
                f"farm {csv_path.stem!r}: missing metadata file {meta_path.name}"
            )
        farms.append(load_farm_timeseries(csv_path, meta_path))
    return farms


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


@click.group(context_settings={"auto_envvar_prefix": "FARMCAST"})
@click.version_option(__version__, prog_name="farmcast")
def main() -> None:
    """Forecast-error experiments on wind and PV farm fleets."""


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Synthetic fleet config JSON.")
@click.option("--kind", type=click.Choice(["wind", "pv"]), default=None,
              help="Generate the default fleet of this kind instead of a config file.")
@click.option("--seed", type=int, default=None, help="Master seed (overrides config).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel farm writers.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
              help="Output directory for farm files.")
def synth(config_path, kind, seed, jobs, out_dir):
    """Generate a synthetic farm fleet with planted error structure."""
    if (config_path is None) == (kind is None):
        raise click.UsageError("give exactly one of --config or --kind")
    try:
        if config_path is not None:
            cfg = load_synth_config(config_path)
            if seed is not None:
                cfg = dataclasses.replace(cfg, seed=seed)
        else:
            if seed is None:
                raise click.UsageError("--seed is required with --kind")
            cfg = SynthConfig.default(kind, seed=seed)
        rows = write_fleet(cfg, out_dir, jobs=jobs)
    except click.UsageError:
        raise
    except Exception as exc:
        raise _fail(str(exc)) from exc
    click.echo(f"wrote {len(rows)} farms to {out_dir}")
    click.echo(f"{'farm_id':<12} {'terrain':<10} {'coverage':>8} {'samples':>8}")
    for row in rows:
        click.echo(
            f"{row['farm_id']:<12} {row['terrain']:<10}"
            f" {row['coverage']:>8.3f} {row['n_samples']:>8d}"
        )


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _load_run_farms(config: RunConfig) -> tuple[list, dict[str, float]]:
    if config.input_dir is not None:
        raw_farms = load_farm_directory(config.input_dir)
    else:
        raw_farms = generate_fleet(config.synth)
    # coverage is a property of the raw series; the lead/lag shift in
    # prepare_farm drops rows and would understate it
    coverage = {ds.meta.farm_id: compute_data_coverage(ds) for ds in raw_farms}
    farms = [prepare_farm(ds, shift_hours=config.shift_hours) for ds in raw_farms]
    return farms, coverage


def _run_outputs_complete(out_dir: Path) -> bool:
    if not (out_dir / "evaluation.csv").exists() or not (out_dir / "farms.json").exists():
        return False
    try:
        load_evaluation(out_dir / "evaluation.csv")
    except (OSError, ValueError, json.JSONDecodeError):
        return False
    return True


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Run config JSON.")
@click.option("--seed", type=int, default=None, help="Master seed (overrides config).")
@click.option("--jobs", type=int, default=None, help="Parallel training jobs (overrides config).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (overrides config).")
@click.option("--resume", is_flag=True, default=False,
              help="Exit successfully without retraining if outputs are complete.")
def run(config_path, seed, jobs, out_dir, resume):
    """Train, grid-search and evaluate all farm x family x run jobs."""
    try:
        config = load_run_config(config_path)
        overrides = {}
        if seed is not None:
            overrides["seed"] = seed
        if jobs is not None:
            overrides["jobs"] = jobs
        if out_dir is not None:
            overrides["out_dir"] = out_dir
        if overrides:
            config = dataclasses.replace(config, **overrides)
    except ValueError as exc:
        raise _fail(str(exc)) from exc

    out = Path(config.out_dir)
    if resume and _run_outputs_complete(out):
        click.echo(f"outputs in {out} are complete; nothing to do")
        return

    try:
        farms, coverage = _load_run_farms(config)
        result = run_experiment(
            farms,
            list(config.families),
            config.grid,
            ExperimentConfig(
                test_window_months=config.test_window_months,
                val_fraction=config.val_fraction,
                clip_predictions=config.clip_predictions,
                jobs=config.jobs,
            ),
            seed=config.seed,
            coverage=coverage,
        )
    except Exception as exc:
        raise _fail(str(exc)) from exc

    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "gridlogs").mkdir(exist_ok=True)
        (out / "models").mkdir(exist_ok=True)
        save_evaluation(result.evaluation, out / "evaluation.csv", out / "farms.json")
        for log in result.job_logs:
            stem = f"{log.farm_id}_{log.family}_run{log.run_index:02d}"
            with open(out / "gridlogs" / f"{stem}.json", "w", encoding="utf-8") as fh:
                json.dump(log.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            with open(out / "models" / f"{stem}.json", "w", encoding="utf-8") as fh:
                json.dump(log.model_document, fh, indent=2, sort_keys=True)
                fh.write("\n")
    except OSError as exc:
        raise _fail(f"failed writing outputs to {out}: {exc}") from exc
    click.echo(
        f"wrote {result.evaluation.n_records} evaluation records and"
        f" {len(result.job_logs)} job logs to {out}"
    )


# ---------------------------------------------------------------------------
# analyze / report
# ---------------------------------------------------------------------------

def _parse_filters(pairs: tuple[str, ...]) -> dict[str, str]:
    filters = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--filter expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        filters[key] = value
    return filters


def _write_report(report, out: Path) -> str:
    stem = report_name(report.facet)
    save_report_json(report, out / f"{stem}.json")
    save_report_csvs(report, out, stem)
    return stem


@main.command()
@click.option("--evaluation", "evaluation_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Evaluation CSV from a run.")
@click.option("--facet", "facet_name", required=True,
              type=click.Choice(sorted(set(FACET_ALIASES))),
              help="Binning axis.")
@click.option("--filter", "filters", multiple=True, metavar="KEY=VALUE",
              help="Record filter (terrain=..., family=..., coverage=lo:hi).")
@click.option("--alpha", type=float, default=0.05, show_default=True,
              help="Kruskal-Wallis significance level.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
              help="Report output directory.")
def analyze(evaluation_path, facet_name, filters, alpha, out_dir):
    """One facet report: boxplot bins, KLD matrix, Kruskal-Wallis tests."""
    try:
        facet = Facet.from_filters(FACET_ALIASES[facet_name], _parse_filters(filters))
        ev = load_evaluation(evaluation_path)
        report = facet_report(ev, facet, alpha=alpha)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = _write_report(report, out)
    except click.UsageError:
        raise
    except (OSError, ValueError) as exc:
        raise _fail(str(exc)) from exc
    click.echo(f"wrote report {stem} ({len(report.bins)} bins) to {out}")


@main.command()
@click.option("--evaluation", "evaluation_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Evaluation CSV from a run.")
@click.option("--alpha", type=float, default=0.05, show_default=True,
              help="Kruskal-Wallis significance level.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
              help="Report output directory.")
def report(evaluation_path, alpha, out_dir):
    """Every applicable facet report plus filtered model comparisons."""
    try:
        ev = load_evaluation(evaluation_path)
        facets = standard_facets(ev)
        families = set(ev.families.tolist())
        if len(families) > 1:
            terrains = sorted({info["terrain"] for info in ev.farms.values()})
            for terrain in terrains:
                facets.append(Facet(kind="model_family", terrain=terrain))
            facets.append(Facet(kind="model_family", coverage_range=(0.9, 1.0)))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stems = []
        for facet in facets:
            try:
                rep = facet_report(ev, facet, alpha=alpha)
            except ValueError:
                continue  # facet not applicable to this fleet
            stems.append(_write_report(rep, out))
        if not stems:
            raise ValueError("no facet produced a report on this evaluation")
        with open(out / "index.json", "w", encoding="utf-8") as fh:
            json.dump({"alpha": alpha, "reports": sorted(stems)}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except (OSError, ValueError) as exc:
        raise _fail(str(exc)) from exc
    click.echo(f"wrote {len(stems)} reports to {out}")


if __name__ == "__main__":
    main()
