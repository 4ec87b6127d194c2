"""``countcast`` command line: ingest, train, predict, scenario."""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import svg
from .bayes import write_grid_csv
from .data import (
    ColumnMapping,
    DataError,
    parse_cumulative_csv,
    read_panel_csv,
    to_daily_increments,
    write_panel_csv,
)
from .ensemble import NATIONAL, band_rows, write_band_csv
from .lstm import NumericError, TrainConfig, load_model, save_model, train
from .pipeline import run_forecast, scope_bands
from .scenario import parse_scenario_spec, run_scenario

log = logging.getLogger("countcast")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    input: str = ""
    panel: str = ""
    model: str = ""
    scenario: str = ""
    out: str = "out"
    horizon: int = 30
    n_draws: int = 1000
    level: float = 0.95
    regions: list = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)
    mapping: ColumnMapping = field(default_factory=ColumnMapping)

    @property
    def panel_path(self):
        return Path(self.panel or Path(self.out) / "panel.csv")

    @property
    def model_path(self):
        return Path(self.model or Path(self.out) / "model.json")


_MAPPING_KEYS = {
    "date_column": "date",
    "region_column": "region",
    "cases_columns": "cases",
    "deaths_columns": "deaths",
    "recovered_columns": "recovered",
    "date_format": "date_format",
}


def load_run_config(path=None, overrides=None):
    """Read a flat ``key = value`` file (``#`` comments) into a :class:`RunConfig`."""
    values = {}
    if path:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_string("[run]\n" + fh.read())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise UsageError(f"bad config file {path}: {exc}") from None
        values.update(parser["run"])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    cfg = RunConfig()
    train_kwargs, mapping_kwargs = {}, {}
    train_types = {f.name: f.type for f in fields(TrainConfig)}
    casts = {"int": int, "float": float}
    for key, raw in values.items():
        try:
            if key in ("input", "panel", "model", "scenario", "out"):
                setattr(cfg, key, str(raw))
            elif key in ("horizon", "n_draws"):
                setattr(cfg, key, int(raw))
            elif key == "level":
                cfg.level = float(raw)
            elif key == "regions":
                cfg.regions = [r.strip() for r in str(raw).split(",") if r.strip()]
            elif key in train_types:
                train_kwargs[key] = casts[train_types[key]](raw)
            elif key in _MAPPING_KEYS:
                mapping_kwargs[_MAPPING_KEYS[key]] = str(raw)
            else:
                raise UsageError(f"unknown config key {key!r}")
        except ValueError:
            raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from None
    try:
        cfg.train = TrainConfig(**train_kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if mapping_kwargs:
        cfg.mapping = ColumnMapping.from_dict(mapping_kwargs)
    if cfg.horizon < 0 or cfg.n_draws < 1 or not 0 < cfg.level < 1:
        raise UsageError("horizon must be >= 0, n_draws >= 1 and level in (0, 1)")
    return cfg


def _out_dir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_panel(cfg):
    path = cfg.panel_path
    if not path.exists():
        raise DataError(f"panel file not found: {path}")
    return read_panel_csv(path)


def cmd_ingest(cfg):
    if not cfg.input:
        raise UsageError("ingest needs an input file (input = ... or --input)")
    try:
        with open(cfg.input, "rb") as fh:
            cum = parse_cumulative_csv(fh, cfg.mapping)
    except FileNotFoundError:
        raise DataError(f"input file not found: {cfg.input}") from None
    panel = to_daily_increments(cum)
    out = _out_dir(cfg)
    write_panel_csv(panel, cfg.panel_path)
    T, D = panel.values.shape
    summary = {
        "T": T,
        "D": D,
        "first_date": panel.dates[0].isoformat(),
        "last_date": panel.dates[-1].isoformat(),
        "regions": panel.regions,
        "clamped_negative_differences": panel.clamped,
    }
    with open(out / "ingest_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    log.info("ingested %d days x %d series (%d negative differences clamped)", T, D, panel.clamped)
    return summary


def cmd_train(cfg):
    panel = _read_panel(cfg)
    model, history = train(panel, cfg.train)
    out = _out_dir(cfg)
    save_model(model, cfg.model_path)
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "train_mae", "val_mae"])
        for step, (tr, va) in enumerate(zip(history.train_mae, history.val_mae), start=1):
            writer.writerow([step, repr(tr), repr(va)])
    if history.train_mae:
        log.info("trained %d steps, final train MAE %.4f", len(history.train_mae),
                 history.train_mae[-1])
    return model, history


def _day_labeler(panel):
    start = panel.dates[0]
    if isinstance(start, dt.date):
        return lambda day: (start + dt.timedelta(days=day)).isoformat()
    return str


def _scopes(cfg, panel):
    if not cfg.regions:
        return panel.regions + [NATIONAL]
    unknown = [r for r in cfg.regions if r not in panel.regions]
    if unknown:
        raise DataError(f"unknown regions in filter: {', '.join(unknown)}")
    return list(cfg.regions)


def _observed(panel, run, scope, feature, quantity):
    """Observed counterpart of a quantity on the run's days (NaN past the data)."""
    T = panel.values.shape[0]
    cols = [k.flat_index for k in panel.keys
            if k.feature is feature and (scope == NATIONAL or k.region == scope)]
    series = panel.values[:, cols].sum(axis=1).astype(float)
    days = run.days
    obs = np.full(len(days), np.nan)
    inside = days < T
    if quantity == "daily":
        obs[inside] = series[days[inside]]
    elif quantity == "cumulative":
        obs[inside] = np.cumsum(series)[days[inside]]
    else:
        d = days[inside]
        prev = np.where(d > 0, series[np.maximum(d - 1, 0)], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            obs[inside] = np.where(prev > 0, series[d] / np.where(prev > 0, prev, 1), np.nan)
    return obs


def _plot_name(prefix, scope, feature, quantity):
    return f"{prefix}{scope}_{feature.value}_{quantity}.svg".replace("/", "-")


def cmd_predict(cfg):
    panel = _read_panel(cfg)
    model = load_model(cfg.model_path)
    run = run_forecast(model, panel, cfg.horizon, cfg.n_draws, cfg.train.seed)
    scopes = _scopes(cfg, panel)
    label = _day_labeler(panel)
    out = _out_dir(cfg)
    plots = out / "plots"
    plots.mkdir(exist_ok=True)

    cells = [c for c in run.grid if c.key.region in scopes]
    write_grid_csv(cells, out / "grid.csv", dates=label)
    rows = []
    x_labels = [label(int(d)) for d in run.days]
    for scope in scopes:
        for (feature, quantity), b in scope_bands(run, scope, cfg.level).items():
            rows.extend(band_rows(b, scope, feature.value, quantity, label))
            chart = svg.band_chart(
                x_labels, b.mean, b.lower, b.upper,
                observed=_observed(panel, run, scope, feature, quantity),
                title=f"{scope} {feature.value} {quantity}",
                y_label=quantity,
            )
            (plots / _plot_name("", scope, feature, quantity)).write_text(chart, encoding="utf-8")
    write_band_csv(rows, out / "bands.csv")
    log.info("wrote bands for %d scopes over %d days", len(scopes), len(run.days))
    return run


def cmd_scenario(cfg):
    if not cfg.scenario:
        raise UsageError("scenario needs a spec file (scenario = ... or --spec)")
    try:
        with open(cfg.scenario, encoding="utf-8") as fh:
            spec = parse_scenario_spec(fh.read())
    except FileNotFoundError:
        raise DataError(f"scenario spec not found: {cfg.scenario}") from None
    panel = _read_panel(cfg)
    model = load_model(cfg.model_path)
    scopes = _scopes(cfg, panel)
    impact = run_scenario(model, panel, spec, cfg.horizon, cfg.n_draws, cfg.train.seed,
                          cfg.level, scopes)
    label = _day_labeler(panel)
    out = _out_dir(cfg)
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    delta_rows, compare_rows = [], []
    x_labels = [label(int(d)) for d in impact.days]
    for (scope, feature, quantity), b in impact.difference.items():
        delta_rows.extend(band_rows(b, scope, feature.value, f"delta_{quantity}", label))
        for prefix, bands in (("baseline_", impact.baseline), ("perturbed_", impact.perturbed)):
            compare_rows.extend(band_rows(bands[(scope, feature, quantity)], scope,
                                          feature.value, prefix + quantity, label))
        chart = svg.band_chart(
            x_labels, b.mean, b.lower, b.upper,
            title=f"{spec.label}: {scope} {feature.value} change in {quantity}",
            y_label=f"delta {quantity}",
        )
        (plots / _plot_name("delta_", scope, feature, quantity)).write_text(chart, encoding="utf-8")
    write_band_csv(delta_rows, out / "impact.csv")
    write_band_csv(compare_rows, out / "scenario_bands.csv")
    log.info("scenario %r: wrote %d difference bands", spec.label, len(impact.difference))
    return impact


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "predict": cmd_predict,
    "scenario": cmd_scenario,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="countcast", description="Probabilistic forecasts of daily count panels.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="master seed for every random stream")
        p.add_argument("--out", help="output directory")
        if name == "ingest":
            p.add_argument("--input", help="cumulative counts CSV")
        if name == "scenario":
            p.add_argument("--spec", dest="scenario", help="scenario spec file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "input": getattr(args, "input", None),
        "scenario": getattr(args, "scenario", None),
    }
    try:
        cfg = load_run_config(args.config, overrides)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"countcast: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"countcast: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"countcast: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
