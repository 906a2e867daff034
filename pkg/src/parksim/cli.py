"""Command-line pipeline: ingest, train, predict, simulate, map export.

One JSON config fully specifies a run; --seed, --hours, and --out override
it for quick experiments. Stages communicate through files in the output
directory, so each subcommand can also be run alone against intermediate
results. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, replace
from datetime import date, datetime
from pathlib import Path

from .data_ingest import (
    SmoothingConfig,
    SynthConfig,
    _atomic_write,
    align_series,
    combine_surveys,
    derive_departures,
    entries_series,
    estimate_rates,
    read_lot_events,
    read_lots,
    read_payments,
    read_rates_csv,
    read_samples_csv,
    read_surveys,
    smooth_departures,
    synth_generate,
    write_rates_csv,
    write_samples_csv,
)
from .errors import ConfigError, DataError, NumericError, ParksimError
from .occupancy_model import (
    EvalReport,
    TrainConfig,
    load_model,
    predict_block_probabilities,
    save_model,
    train,
    train_baseline,
)
from .offstreet_sim import (
    LotSimConfig,
    estimate_offstreet_time,
    initial_occupancy,
)
from .onstreet_sim import OnstreetConfig, PolicyWeights, estimate_onstreet_time
from .road_graph import load_graph

SAMPLES_FILE = "samples.csv"
RATES_FILE = "rates.csv"
INGEST_REPORT_FILE = "ingest.json"
MODEL_FILE = "model.json"
TRAIN_REPORT_FILE = "train_report.json"
EVAL_FILE = "eval.json"
AVAILABILITY_FILE = "availability.csv"
ONSTREET_FILE = "onstreet.csv"
OFFSTREET_FILE = "offstreet.csv"
DIFF_FILE = "diff.csv"


@dataclass(frozen=True)
class RunConfig:
    out_dir: Path
    graph: Path | None
    payments: Path | None
    surveys: Path | None
    lots: Path | None
    lot_events: Path | None
    hours: tuple[int, ...]
    day_of_week: int
    predict_date: date
    seed: int
    train: TrainConfig
    onstreet: OnstreetConfig
    offstreet: LotSimConfig
    policy: PolicyWeights
    smoothing: SmoothingConfig
    synth: SynthConfig


_TOP_KEYS = {"graph", "payments", "surveys", "lots", "lot_events", "out_dir",
             "hours", "day_of_week", "predict_date", "seed", "train",
             "onstreet", "offstreet", "policy", "smoothing", "synth"}


def _build_section(cls, raw: dict, section: str, defaults: dict):
    merged = dict(defaults)
    unknown = set(raw) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    merged.update(raw)
    try:
        return cls(**merged)
    except ParksimError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad '{section}' section: {exc}") from exc


def load_run_config(path: str, *, seed_override: int | None = None,
                    hours_override: tuple[int, ...] | None = None,
                    out_override: str | None = None) -> RunConfig:
    cfg_path = Path(path)
    try:
        raw = json.loads(cfg_path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    base = cfg_path.parent

    def path_of(key: str) -> Path | None:
        value = raw.get(key)
        return None if value is None else (base / str(value))

    seed = int(raw.get("seed", 0)) if seed_override is None else int(seed_override)

    hours_raw = raw.get("hours", list(range(24)))
    hours = hours_override if hours_override is not None else tuple(hours_raw)
    hours = tuple(dict.fromkeys(int(h) for h in hours))
    if not hours or any(not 0 <= h <= 23 for h in hours):
        raise ConfigError(f"hours must be within 0..23, got {hours}")

    day = int(raw.get("day_of_week", 4))
    if not 0 <= day <= 6:
        raise ConfigError(f"day_of_week must be in 0..6, got {day}")

    try:
        predict_date = date.fromisoformat(str(raw.get("predict_date", "2026-03-13")))
    except ValueError as exc:
        raise ConfigError(f"bad predict_date: {exc}") from exc

    out_dir = Path(out_override) if out_override is not None else (base / str(raw.get("out_dir", "out")))

    synth_raw = dict(raw.get("synth", {}))
    if "start_date" in synth_raw:
        try:
            synth_raw["start_date"] = date.fromisoformat(str(synth_raw["start_date"]))
        except ValueError as exc:
            raise ConfigError(f"bad synth.start_date: {exc}") from exc
    if "lot_nodes" in synth_raw:
        synth_raw["lot_nodes"] = tuple(str(x) for x in synth_raw["lot_nodes"])

    smoothing_raw = dict(raw.get("smoothing", {}))
    if "peak_hours" in smoothing_raw:
        smoothing_raw["peak_hours"] = tuple(int(h) for h in smoothing_raw["peak_hours"])

    try:
        return RunConfig(
            out_dir=out_dir,
            graph=path_of("graph"),
            payments=path_of("payments"),
            surveys=path_of("surveys"),
            lots=path_of("lots"),
            lot_events=path_of("lot_events"),
            hours=hours,
            day_of_week=day,
            predict_date=predict_date,
            seed=seed,
            train=_build_section(TrainConfig, dict(raw.get("train", {})), "train",
                                 {"seed": seed}),
            onstreet=_build_section(OnstreetConfig, dict(raw.get("onstreet", {})),
                                    "onstreet", {"seed": seed}),
            offstreet=_build_section(LotSimConfig, dict(raw.get("offstreet", {})),
                                     "offstreet", {"seed": seed}),
            policy=_build_section(PolicyWeights, dict(raw.get("policy", {})),
                                  "policy", {}),
            smoothing=_build_section(SmoothingConfig, smoothing_raw, "smoothing", {}),
            synth=_build_section(SynthConfig, synth_raw, "synth", {}),
        )
    except DataError as exc:
        # section validation failures are configuration mistakes here
        raise ConfigError(str(exc)) from exc


def _require(value: Path | None, key: str) -> Path:
    if value is None:
        raise ConfigError(f"config key '{key}' is required for this stage")
    if not value.exists():
        raise ConfigError(f"file for '{key}' not found: {value}")
    return value


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _fmt(x: float) -> str:
    return repr(float(x))


def _report_dict(report: EvalReport) -> dict:
    return {
        "mean_val_cross_entropy": report.mean_val_cross_entropy,
        "mean_val_accuracy": report.mean_val_accuracy,
        "per_split": [{"cross_entropy": s.cross_entropy, "accuracy": s.accuracy}
                      for s in report.per_split],
    }


# -- stages ----------------------------------------------------------------------

def stage_synth(cfg: RunConfig) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    synth_generate(cfg.synth, cfg.seed, cfg.out_dir)


def stage_ingest(cfg: RunConfig) -> None:
    g = load_graph(_require(cfg.graph, "graph"))
    surveys = read_surveys(_require(cfg.surveys, "surveys"))
    unknown_blocks = sorted({r.block_id for r in surveys} - set(g.edges))
    if unknown_blocks:
        raise DataError(f"surveys reference unknown blocks: {unknown_blocks[:5]}")
    combined = combine_surveys(surveys)

    lots = read_lots(_require(cfg.lots, "lots"))
    events = read_lot_events(_require(cfg.lot_events, "lot_events"))
    unknown_lots = sorted({e.lot_id for e in events} - {l.id for l in lots})
    if unknown_lots:
        raise DataError(f"lot events reference unknown lots: {unknown_lots}")

    entries = entries_series(events)
    departures = derive_departures(events)
    aligned: dict[str, dict[datetime, float]] = {}
    dropped = 0
    for lot_id, series in entries.items():
        start = min(series)
        hours = len(series)
        if hours % (7 * 24):
            raise DataError(f"lot {lot_id!r} entry series does not span whole weeks")
        raw_dep = departures.get(lot_id, {})
        smoothed = smooth_departures(
            align_series(raw_dep, start, hours), cfg.smoothing)
        dropped += int(sum(raw_dep.values()) - sum(smoothed.values()))
        aligned[lot_id] = smoothed
    weeks = {lot_id: len(entries[lot_id]) // (7 * 24) for lot_id in entries}
    if len(set(weeks.values())) > 1:
        raise DataError(f"lots cover different week counts: {weeks}")
    table = estimate_rates(entries, aligned, weeks=next(iter(weeks.values())))

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_samples_csv(list(combined.samples), cfg.out_dir / SAMPLES_FILE)
    write_rates_csv(table, cfg.out_dir / RATES_FILE)
    _atomic_write(cfg.out_dir / INGEST_REPORT_FILE, json.dumps({
        "samples": len(combined.samples),
        "surveys_discarded": combined.discarded,
        "lots": sorted(entries),
        "weeks": next(iter(weeks.values())),
        "departures_outside_span": dropped,
    }, sort_keys=True))


def stage_train(cfg: RunConfig) -> None:
    g = load_graph(_require(cfg.graph, "graph"))
    samples = read_samples_csv(cfg.out_dir / SAMPLES_FILE)
    payments = read_payments(_require(cfg.payments, "payments"))
    model, report = train(samples, payments, g, cfg.train)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, cfg.out_dir / MODEL_FILE)
    _atomic_write(cfg.out_dir / TRAIN_REPORT_FILE,
                  json.dumps(_report_dict(report), sort_keys=True))


def stage_eval(cfg: RunConfig) -> None:
    g = load_graph(_require(cfg.graph, "graph"))
    samples = read_samples_csv(cfg.out_dir / SAMPLES_FILE)
    payments = read_payments(_require(cfg.payments, "payments"))
    _, mlp_report = train(samples, payments, g, cfg.train)
    _, base_report = train_baseline(samples, payments, g, cfg.train)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(cfg.out_dir / EVAL_FILE, json.dumps({
        "network": _report_dict(mlp_report),
        "baseline": _report_dict(base_report),
        "cross_entropy_improvement": (base_report.mean_val_cross_entropy
                                      - mlp_report.mean_val_cross_entropy),
    }, sort_keys=True))


def stage_predict(cfg: RunConfig) -> None:
    g = load_graph(_require(cfg.graph, "graph"))
    model = load_model(cfg.out_dir / MODEL_FILE)
    payments = read_payments(_require(cfg.payments, "payments"))
    rows = []
    for hour in cfg.hours:
        table = predict_block_probabilities(model, payments, g, hour, cfg.predict_date)
        for block_id in sorted(table):
            rows.append([block_id, hour, _fmt(table[block_id])])
    _write_csv(cfg.out_dir / AVAILABILITY_FILE,
               ["block_id", "hour", "p_available"], rows)


def _read_availability(path: Path) -> dict[int, dict[str, float]]:
    if not path.exists():
        raise ConfigError(f"availability table not found: {path} (run predict first)")
    by_hour: dict[int, dict[str, float]] = {}
    with path.open() as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            by_hour.setdefault(int(row["hour"]), {})[row["block_id"]] = \
                float(row["p_available"])
    return by_hour


def stage_sim_on(cfg: RunConfig) -> None:
    g = load_graph(_require(cfg.graph, "graph"))
    probs_by_hour = _read_availability(cfg.out_dir / AVAILABILITY_FILE)
    rows = []
    for hour in cfg.hours:
        probs = probs_by_hour.get(hour)
        if probs is None:
            raise DataError(f"availability table has no rows for hour {hour}")
        for block_id in sorted(g.edges):
            est = estimate_onstreet_time(g, probs, block_id, cfg.onstreet,
                                         cfg.policy, hour)
            rows.append([block_id, hour, _fmt(est.mean_s), _fmt(est.std_s),
                         _fmt(est.censored_fraction), est.n_samples])
    _write_csv(cfg.out_dir / ONSTREET_FILE,
               ["block_id", "hour", "mean_onstreet_s", "std_onstreet_s",
                "censored_fraction", "n_samples"], rows)


def stage_sim_off(cfg: RunConfig) -> None:
    g = load_graph(_require(cfg.graph, "graph"))
    lots = read_lots(_require(cfg.lots, "lots"))
    table = read_rates_csv(cfg.out_dir / RATES_FILE)
    entries = {}
    departures = {}
    for (lot_id, dow, hour), (lam_a, lam_d) in table.rates.items():
        entries.setdefault(lot_id, {})[(dow, hour)] = lam_a
        departures.setdefault(lot_id, {})[(dow, hour)] = lam_d
    cache: dict = {}
    rows = []
    for hour in cfg.hours:
        occupancy = {
            lot.id: initial_occupancy(entries.get(lot.id, {}),
                                      departures.get(lot.id, {}),
                                      cfg.day_of_week, hour, lot.capacity)
            for lot in lots
        }
        for block_id in sorted(g.edges):
            est = estimate_offstreet_time(g, lots, table, block_id,
                                          cfg.day_of_week, hour, cfg.offstreet,
                                          occupancy_by_lot=occupancy,
                                          _lot_stats_cache=cache)
            rows.append([block_id, hour, _fmt(est.total_s), _fmt(est.std_s),
                         est.lot_id, _fmt(est.drive_s), _fmt(est.lot_s),
                         _fmt(est.walk_s)])
    _write_csv(cfg.out_dir / OFFSTREET_FILE,
               ["block_id", "hour", "mean_offstreet_s", "std_offstreet_s",
                "lot_id", "drive_s", "lot_s", "walk_s"], rows)


def _read_time_column(path: Path, column: str) -> dict[tuple[str, int], float]:
    if not path.exists():
        raise ConfigError(f"missing simulation output: {path}")
    out: dict[tuple[str, int], float] = {}
    with path.open() as fh:
        for row in csv.DictReader(fh):
            out[(row["block_id"], int(row["hour"]))] = float(row[column])
    return out


def stage_diff(cfg: RunConfig) -> None:
    g = load_graph(_require(cfg.graph, "graph"))
    on_times = _read_time_column(cfg.out_dir / ONSTREET_FILE, "mean_onstreet_s")
    off_times = _read_time_column(cfg.out_dir / OFFSTREET_FILE, "mean_offstreet_s")
    expected = {(block_id, hour) for hour in cfg.hours for block_id in g.edges}
    for name, table in (("onstreet", on_times), ("offstreet", off_times)):
        missing = expected - set(table)
        if missing:
            raise DataError(f"{name} results missing {len(missing)} (block, hour) "
                            f"rows, e.g. {sorted(missing)[:3]}")

    rows = []
    for hour in cfg.hours:
        for block_id in sorted(g.edges):
            t_on = on_times[(block_id, hour)]
            t_off = off_times[(block_id, hour)]
            rows.append([block_id, hour, _fmt(t_on), _fmt(t_off), _fmt(t_off - t_on)])
    _write_csv(cfg.out_dir / DIFF_FILE,
               ["block_id", "hour", "mean_onstreet_s", "mean_offstreet_s",
                "delta_s"], rows)

    for hour in cfg.hours:
        for layer in ("onstreet", "offstreet", "diff"):
            features = []
            for block_id in sorted(g.edges):
                e = g.edges[block_id]
                a, b = g.nodes[e.from_node], g.nodes[e.to_node]
                t_on = on_times[(block_id, hour)]
                t_off = off_times[(block_id, hour)]
                features.append({
                    "type": "Feature",
                    "geometry": {"type": "LineString",
                                 "coordinates": [[a.lon, a.lat], [b.lon, b.lat]]},
                    "properties": {"block_id": block_id, "hour": hour,
                                   "t_on_s": t_on, "t_off_s": t_off,
                                   "delta_s": t_off - t_on, "layer": layer},
                })
            collection = {"type": "FeatureCollection", "features": features}
            _atomic_write(cfg.out_dir / f"{layer}_h{hour:02d}.geojson",
                          json.dumps(collection, sort_keys=True))


PIPELINE = (("ingest", stage_ingest), ("train", stage_train),
            ("predict", stage_predict), ("sim-on", stage_sim_on),
            ("sim-off", stage_sim_off), ("diff", stage_diff))


def cmd_pipeline(cfg: RunConfig) -> None:
    for name, fn in PIPELINE:
        try:
            fn(cfg)
        except ParksimError as exc:
            raise type(exc)(f"{name}: {exc}") from exc


STAGES = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "train": stage_train,
    "eval": stage_eval,
    "predict": stage_predict,
    "sim-on": stage_sim_on,
    "sim-off": stage_sim_off,
    "diff": stage_diff,
    "pipeline": cmd_pipeline,
}


def parse_hours(spec: str) -> tuple[int, ...]:
    """Parse an hours argument like '8-18' or '8,12,17' or '6-9,15'."""
    hours: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, _, hi = part.partition("-")
            try:
                lo_i, hi_i = int(lo), int(hi)
            except ValueError as exc:
                raise ConfigError(f"bad hours range {part!r}") from exc
            if lo_i > hi_i:
                raise ConfigError(f"bad hours range {part!r}")
            hours.extend(range(lo_i, hi_i + 1))
        else:
            try:
                hours.append(int(part))
            except ValueError as exc:
                raise ConfigError(f"bad hour {part!r}") from exc
    if not hours:
        raise ConfigError(f"no hours in {spec!r}")
    return tuple(hours)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parksim",
        description="Estimate per-block on-street vs off-street parking times.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override every seed in the config")
        p.add_argument("--hours", default=None,
                       help="hours to process, e.g. 8-18 or 8,12,17")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        hours = parse_hours(args.hours) if args.hours is not None else None
        cfg = load_run_config(args.config, seed_override=args.seed,
                              hours_override=hours, out_override=args.out)
        STAGES[args.command](cfg)
    except ConfigError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
