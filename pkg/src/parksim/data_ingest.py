"""Raw-data ingestion and the synthetic city generator.

Covers four jobs: collapsing meter-level occupancy surveys into block-level
samples, turning lot entry records with paid durations into hourly
departure counts, smoothing the artificial departure spikes that flat-rate
boundaries create, and estimating hourly Poisson rates per day of week.
The synthetic generator emits a complete, schema-compatible city bundle
(graph, payments, surveys, lots, lot events) plus the ground-truth
availability used to validate everything downstream.

Timestamps are naive local time throughout; CSV columns carry ISO 8601.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .occupancy_model import OccupancySample, PaymentRecord
from .offstreet_sim import LotRateTable, LotSpec
from .road_graph import BlockFace, Intersection, RoadGraph, build_graph, save_graph

HOUR = timedelta(hours=1)
SURVEY_WINDOW = timedelta(minutes=30)


@dataclass(frozen=True)
class SurveyRecord:
    meter_id: str
    block_id: str
    timestamp: datetime | None  # None: unusable check, will be discarded
    free: bool


@dataclass(frozen=True)
class LotEventRecord:
    lot_id: str
    hour: datetime  # truncated to the hour
    entries: int
    paid_durations_s: tuple[float, ...]

    def __post_init__(self):
        if len(self.paid_durations_s) > self.entries:
            raise DataError(f"lot {self.lot_id!r} at {self.hour}: more durations than entries")


@dataclass(frozen=True)
class SmoothingConfig:
    peak_hours: tuple[int, ...] = (18,)  # flat-rate boundaries, hour of day
    sigma_h: float = 3.5
    span_h: int = 12

    def __post_init__(self):
        if not self.sigma_h > 0 or self.span_h < 1:
            raise DataError("sigma_h must be positive and span_h >= 1")


@dataclass(frozen=True)
class SurveyCombination:
    samples: tuple[OccupancySample, ...]
    discarded: int  # records dropped for missing timestamps


# -- surveys -------------------------------------------------------------------

def combine_surveys(records: Iterable[SurveyRecord]) -> SurveyCombination:
    """Collapse meter-level checks into one availability sample per
    (block, half-hour window).

    Records without timestamps are unusable and only counted. A block is
    available in a window if any surveyed meter had a free spot; the sample
    time is the window midpoint.
    """
    discarded = 0
    groups: dict[tuple[str, datetime], int] = {}
    for r in records:
        if r.timestamp is None:
            discarded += 1
            continue
        window = _window_start(r.timestamp)
        key = (r.block_id, window)
        groups[key] = max(groups.get(key, 0), int(r.free))
    samples = tuple(
        OccupancySample(block_id=block, time=window + SURVEY_WINDOW / 2,
                        available=available)
        for (block, window), available in sorted(groups.items())
    )
    return SurveyCombination(samples=samples, discarded=discarded)


def _window_start(ts: datetime) -> datetime:
    minute = 0 if ts.minute < 30 else 30
    return ts.replace(minute=minute, second=0, microsecond=0)


# -- lot departures ---------------------------------------------------------------

def derive_departures(events: Iterable[LotEventRecord]) -> dict[str, dict[datetime, float]]:
    """Naive hourly departure counts: every car leaves when its paid time
    expires. Flat-rate spikes produced here are corrected by smoothing."""
    out: dict[str, dict[datetime, float]] = {}
    for ev in events:
        series = out.setdefault(ev.lot_id, {})
        for dur in ev.paid_durations_s:
            if dur < 0:
                raise DataError(f"negative paid duration in lot {ev.lot_id!r}")
            leave = (ev.hour + timedelta(seconds=float(dur))).replace(
                minute=0, second=0, microsecond=0)
            series[leave] = series.get(leave, 0.0) + 1.0
    return out


def smooth_departures(counts: Mapping[datetime, float],
                      cfg: SmoothingConfig) -> dict[datetime, float]:
    """Redistribute departure spikes at configured peak hours backward.

    The excess over the median of the +-3 h neighborhood is removed from
    the peak and spread over the preceding span_h hours with left-half
    Gaussian weights (std sigma_h, normalized). Grand totals are conserved.
    """
    if not counts:
        return {}
    start = min(counts)
    end = max(counts)
    for ts in counts:
        if ts.minute or ts.second or ts.microsecond:
            raise DataError(f"departure series key {ts} is not hour-aligned")
    index = []
    cursor = start
    while cursor <= end:
        index.append(cursor)
        cursor += HOUR
    values = [float(counts.get(ts, 0.0)) for ts in index]

    weights = _left_gaussian_weights(cfg.sigma_h, cfg.span_h)
    for i, ts in enumerate(index):
        if ts.hour not in cfg.peak_hours:
            continue
        if i < cfg.span_h:
            raise DataError(
                f"series too short: need {cfg.span_h} hours before peak at {ts}")
        neighborhood = [values[j] for j in range(max(0, i - 3), min(len(values), i + 4))
                        if j != i]
        excess = max(0.0, values[i] - statistics.median(neighborhood))
        if excess == 0.0:
            continue
        values[i] -= excess
        for d, w in enumerate(weights, start=1):
            values[i - d] += excess * w
    return dict(zip(index, values))


def _left_gaussian_weights(sigma: float, span: int) -> list[float]:
    raw = [math.exp(-(d * d) / (2.0 * sigma * sigma)) for d in range(1, span + 1)]
    total = sum(raw)
    return [r / total for r in raw]


# -- rate estimation ----------------------------------------------------------------

def estimate_rates(entries: Mapping[str, Mapping[datetime, float]],
                   departures: Mapping[str, Mapping[datetime, float]],
                   weeks: int) -> LotRateTable:
    """Average hourly flows into per-(lot, day-of-week, hour) Poisson rates.

    Both series must cover the same contiguous whole-week span, so every
    slot is the mean of exactly ``weeks`` observations.
    """
    if weeks < 1:
        raise DataError("weeks must be >= 1")
    rates: dict[tuple[str, int, int], tuple[float, float]] = {}
    for lot_id in sorted(entries):
        ent = entries[lot_id]
        dep = departures.get(lot_id)
        if dep is None:
            raise DataError(f"no departure series for lot {lot_id!r}")
        expected = weeks * 7 * 24
        gaps = _series_gaps(ent, expected) + _series_gaps(dep, expected)
        if set(ent) != set(dep):
            gaps += sorted(set(ent) ^ set(dep))
        if gaps:
            raise DataError(f"lot {lot_id!r} hourly series incomplete; gaps at {gaps[:8]}")
        sums: dict[tuple[int, int], list[float]] = {}
        for ts, n_in in ent.items():
            slot = (ts.weekday(), ts.hour)
            acc = sums.setdefault(slot, [0.0, 0.0])
            acc[0] += n_in
            acc[1] += dep[ts]
        for (dow, hour), (sum_in, sum_out) in sums.items():
            rates[(lot_id, dow, hour)] = (sum_in / weeks, sum_out / weeks)
    table = LotRateTable(rates)
    table.validate()
    return table


def _series_gaps(series: Mapping[datetime, float], expected: int) -> list[datetime]:
    if not series:
        return []
    start = min(series)
    gaps = [start + i * HOUR for i in range(expected)
            if start + i * HOUR not in series]
    if len(series) != expected and not gaps:
        raise DataError(f"series has {len(series)} hours, expected {expected}")
    return gaps


def entries_series(events: Iterable[LotEventRecord]) -> dict[str, dict[datetime, float]]:
    out: dict[str, dict[datetime, float]] = {}
    for ev in events:
        series = out.setdefault(ev.lot_id, {})
        series[ev.hour] = series.get(ev.hour, 0.0) + float(ev.entries)
    return out


def align_series(series: Mapping[datetime, float], start: datetime,
                 hours: int) -> dict[datetime, float]:
    """Densify onto [start, start + hours); values outside are dropped."""
    return {start + i * HOUR: float(series.get(start + i * HOUR, 0.0))
            for i in range(hours)}


# -- file I/O ---------------------------------------------------------------------

def _atomic_write(path: str | os.PathLike, text: str) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _parse_dt(raw: str, where: str) -> datetime:
    try:
        return datetime.fromisoformat(raw)
    except ValueError as exc:
        raise DataError(f"bad timestamp {raw!r} in {where}") from exc


def read_payments(path: str | os.PathLike) -> list[PaymentRecord]:
    rows = _read_csv(path, ("block_id", "start_iso8601", "duration_s"))
    records = []
    for row in rows:
        duration = float(row["duration_s"])
        if duration <= 0:
            raise DataError(f"nonpositive payment duration in {path}")
        records.append(PaymentRecord(block_id=row["block_id"],
                                     start=_parse_dt(row["start_iso8601"], str(path)),
                                     duration_s=duration))
    return records


def write_payments(records: Sequence[PaymentRecord], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["block_id", "start_iso8601", "duration_s"])
    for r in sorted(records, key=lambda r: (r.block_id, r.start, r.duration_s)):
        writer.writerow([r.block_id, r.start.isoformat(), int(r.duration_s)])
    _atomic_write(path, buf.getvalue())


def read_surveys(path: str | os.PathLike) -> list[SurveyRecord]:
    rows = _read_csv(path, ("meter_id", "block_id", "timestamp_iso8601", "free_spots"))
    records = []
    for row in rows:
        raw_ts = row["timestamp_iso8601"].strip()
        ts = _parse_dt(raw_ts, str(path)) if raw_ts else None
        records.append(SurveyRecord(meter_id=row["meter_id"], block_id=row["block_id"],
                                    timestamp=ts, free=int(row["free_spots"]) > 0))
    return records


def write_surveys(records: Sequence[SurveyRecord], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["meter_id", "block_id", "timestamp_iso8601", "free_spots"])
    for r in records:
        ts = r.timestamp.isoformat() if r.timestamp is not None else ""
        writer.writerow([r.meter_id, r.block_id, ts, int(r.free)])
    _atomic_write(path, buf.getvalue())


def read_lots(path: str | os.PathLike) -> list[LotSpec]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read lots file {path}: {exc}") from exc
    try:
        return [LotSpec(id=str(x["id"]), node=str(x["node"]), capacity=int(x["capacity"]))
                for x in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed lots file {path}: {exc}") from exc


def write_lots(lots: Sequence[LotSpec], path: str | os.PathLike) -> None:
    payload = [{"id": l.id, "node": l.node, "capacity": l.capacity}
               for l in sorted(lots, key=lambda l: l.id)]
    _atomic_write(path, json.dumps(payload, sort_keys=True))


def read_lot_events(path: str | os.PathLike) -> list[LotEventRecord]:
    rows = _read_csv(path, ("lot_id", "hour_iso8601", "entries", "paid_durations_s"))
    events = []
    for row in rows:
        blob = row["paid_durations_s"].strip()
        durations = tuple(float(x) for x in blob.split(";")) if blob else ()
        events.append(LotEventRecord(lot_id=row["lot_id"],
                                     hour=_parse_dt(row["hour_iso8601"], str(path)),
                                     entries=int(row["entries"]),
                                     paid_durations_s=durations))
    return events


def write_lot_events(events: Sequence[LotEventRecord], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["lot_id", "hour_iso8601", "entries", "paid_durations_s"])
    for ev in sorted(events, key=lambda e: (e.lot_id, e.hour)):
        blob = ";".join(str(int(d)) for d in ev.paid_durations_s)
        writer.writerow([ev.lot_id, ev.hour.isoformat(), ev.entries, blob])
    _atomic_write(path, buf.getvalue())


def read_rates_csv(path: str | os.PathLike) -> LotRateTable:
    rows = _read_csv(path, ("lot_id", "day_of_week", "hour",
                            "lambda_a_per_hour", "lambda_d_per_hour"))
    rates = {}
    for row in rows:
        key = (row["lot_id"], int(row["day_of_week"]), int(row["hour"]))
        if key in rates:
            raise DataError(f"duplicate rate row for {key} in {path}")
        rates[key] = (float(row["lambda_a_per_hour"]), float(row["lambda_d_per_hour"]))
    table = LotRateTable(rates)
    table.validate()
    return table


def write_rates_csv(table: LotRateTable, path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["lot_id", "day_of_week", "hour",
                     "lambda_a_per_hour", "lambda_d_per_hour"])
    for (lot_id, dow, hour), (lam_a, lam_d) in sorted(table.rates.items()):
        writer.writerow([lot_id, dow, hour, repr(float(lam_a)), repr(float(lam_d))])
    _atomic_write(path, buf.getvalue())


def read_samples_csv(path: str | os.PathLike) -> list[OccupancySample]:
    rows = _read_csv(path, ("block_id", "time_iso8601", "available"))
    return [OccupancySample(block_id=row["block_id"],
                            time=_parse_dt(row["time_iso8601"], str(path)),
                            available=int(row["available"]))
            for row in rows]


def write_samples_csv(samples: Sequence[OccupancySample], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["block_id", "time_iso8601", "available"])
    for s in sorted(samples, key=lambda s: (s.block_id, s.time)):
        writer.writerow([s.block_id, s.time.isoformat(), s.available])
    _atomic_write(path, buf.getvalue())


def _read_csv(path: str | os.PathLike, columns: tuple[str, ...]) -> list[dict[str, str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != list(columns):
        raise DataError(f"{path}: expected header {','.join(columns)}, "
                        f"got {reader.fieldnames}")
    try:
        return list(reader)
    except csv.Error as exc:
        raise DataError(f"malformed CSV {path}: {exc}") from exc


# -- synthetic city ------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic city: a square grid with demand and
    congestion concentrated at the center and one or more off-street lots.

    ``days`` must cover whole weeks so lot rates can be estimated. The
    observed fraction mimics seeing a single payment channel only.
    """

    grid_n: int = 6
    block_length_m: float = 100.0
    meters_per_block: int = 5
    unmetered_fraction: float = 0.12
    drive_speed_mps: float = 8.0
    walk_speed_mps: float = 1.4
    days: int = 14
    start_date: date = date(2026, 3, 2)  # a Monday
    observed_fraction: float = 0.6
    surveys_per_block: int = 8
    survey_missing_fraction: float = 0.15
    lot_capacity: int = 40
    lot_nodes: tuple[str, ...] = ()  # empty: one lot at the central node
    flat_rate_end_hour: int = 18
    demand_scale: float = 1.0

    def __post_init__(self):
        if self.grid_n < 2:
            raise DataError("grid_n must be >= 2")
        if self.days < 7 or self.days % 7:
            raise DataError("days must be a positive multiple of 7")
        if not 0.0 < self.observed_fraction <= 1.0:
            raise DataError("observed_fraction must be in (0, 1]")
        if not 0.0 <= self.survey_missing_fraction < 1.0:
            raise DataError("survey_missing_fraction must be in [0, 1)")
        if self.meters_per_block < 1 or self.lot_capacity < 1:
            raise DataError("meters_per_block and lot_capacity must be >= 1")
        if not 0 <= self.flat_rate_end_hour <= 23:
            raise DataError("flat_rate_end_hour must be an hour of day")


@dataclass(frozen=True)
class SynthBundle:
    out_dir: Path
    graph: RoadGraph
    payments: tuple[PaymentRecord, ...]
    surveys: tuple[SurveyRecord, ...]
    lots: tuple[LotSpec, ...]
    lot_events: tuple[LotEventRecord, ...]
    ground_truth: dict


BUNDLE_FILES = ("graph.json", "payments.csv", "surveys.csv", "lots.json",
                "lot_events.csv", "ground_truth.json")


def _hour_shape(h: int) -> float:
    """Business-hours demand bump peaking early afternoon."""
    return math.exp(-((h - 13.5) / 3.5) ** 2)


def _lot_shape(h: int) -> float:
    return math.exp(-((h - 11.0) / 3.2) ** 2)


@dataclass
class _FacePlan:
    face: BlockFace
    centrality: float  # 1 at the grid center, 0 at the far corners


def _grid_faces(cfg: SynthConfig, rng: np.random.Generator):
    n = cfg.grid_n
    nodes = [Intersection(f"n{r}_{c}", 49.26 + r * 9e-4, -123.13 + c * 1.3e-3)
             for r in range(n) for c in range(n)]
    center = (n - 1) / 2.0
    max_dist = math.hypot(center, center)
    plans: list[_FacePlan] = []
    for r in range(n):
        for c in range(n):
            segments = []
            if c + 1 < n:
                segments.append((f"h{r}_{c}", (r, c), (r, c + 1), "E", "W"))
            if r + 1 < n:
                segments.append((f"v{r}_{c}", (r, c), (r + 1, c), "S", "N"))
            for base_id, a, b, fwd, rev in segments:
                length = cfg.block_length_m * float(rng.uniform(0.85, 1.25))
                mid = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
                centrality = 1.0 - math.hypot(mid[0] - center, mid[1] - center) / max_dist
                walk = length / cfg.walk_speed_mps
                base_drive = length / cfg.drive_speed_mps
                drive = tuple(
                    base_drive * (1.0 + (0.25 + 1.55 * centrality) * _hour_shape(h))
                    for h in range(24))
                for tag, (u, v) in ((fwd, (a, b)), (rev, (b, a))):
                    metered = rng.random() >= cfg.unmetered_fraction
                    face = BlockFace(
                        id=f"{base_id}{tag}",
                        from_node=f"n{u[0]}_{u[1]}", to_node=f"n{v[0]}_{v[1]}",
                        length_m=length,
                        meter_count=cfg.meters_per_block if metered else 0,
                        walk_time_s=walk, drive_time_s=drive)
                    plans.append(_FacePlan(face=face, centrality=centrality))
    return nodes, plans


class _SessionTimeline:
    """Admitted paid sessions of one block, queryable by time."""

    def __init__(self, sessions: list[tuple[float, float]]):
        if sessions:
            arr = np.asarray(sessions)
            self.starts = arr[:, 0]
            self.ends = arr[:, 0] + arr[:, 1]
        else:
            self.starts = np.empty(0)
            self.ends = np.empty(0)

    def active_at(self, epoch: float) -> int:
        return int(np.count_nonzero((self.starts <= epoch) & (epoch < self.ends)))


def _generate_sessions(plan: _FacePlan, cfg: SynthConfig,
                       rng: np.random.Generator) -> list[tuple[float, float]]:
    """Admitted (start_epoch, duration) pairs, capped at the meter count."""
    candidates: list[tuple[float, float]] = []
    day0 = datetime.combine(cfg.start_date, time(0, 0)).timestamp()
    pressure_base = 0.25 + 1.15 * plan.centrality
    for day in range(cfg.days):
        for h in range(24):
            offered = (plan.face.meter_count * pressure_base
                       * (0.10 + 1.15 * _hour_shape(h)) * cfg.demand_scale)
            for _ in range(int(rng.poisson(offered))):
                start = day0 + day * 86_400 + h * 3600 + float(rng.integers(0, 3600))
                duration = float(np.clip(rng.lognormal(math.log(3300.0), 0.55),
                                         600.0, 4 * 3600.0))
                candidates.append((start, round(duration / 60.0) * 60.0))
    candidates.sort()
    admitted: list[tuple[float, float]] = []
    active_ends: list[float] = []
    for start, duration in candidates:
        active_ends = [e for e in active_ends if e > start]
        if len(active_ends) < plan.face.meter_count:
            admitted.append((start, duration))
            active_ends.append(start + duration)
    return admitted


def synth_generate(cfg: SynthConfig, seed: int, out_dir: str | os.PathLike) -> SynthBundle:
    """Write a deterministic synthetic city bundle into ``out_dir``.

    The bundle reproduces the external file schemas exactly. The recorded
    ground truth holds, per block, the availability at half past each hour
    averaged over days, plus the exact availability at each usable survey
    window for end-to-end checks.
    """
    rng = np.random.default_rng(int(seed))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    nodes, plans = _grid_faces(cfg, rng)
    graph = build_graph(nodes, [p.face for p in plans])

    # paid sessions and the availability they imply
    timelines: dict[str, _SessionTimeline] = {}
    payments: list[PaymentRecord] = []
    for plan in plans:
        if plan.face.meter_count == 0:
            timelines[plan.face.id] = _SessionTimeline([])
            continue
        sessions = _generate_sessions(plan, cfg, rng)
        timelines[plan.face.id] = _SessionTimeline(sessions)
        for start, duration in sessions:
            if rng.random() < cfg.observed_fraction:
                payments.append(PaymentRecord(block_id=plan.face.id,
                                              start=datetime.fromtimestamp(start),
                                              duration_s=duration))

    # meter-level surveys, some with missing timestamps
    surveys: list[SurveyRecord] = []
    survey_truth: dict[str, dict[str, int]] = {}
    for plan in plans:
        face = plan.face
        if face.meter_count == 0:
            continue
        timeline = timelines[face.id]
        seen_windows: set[datetime] = set()
        for visit in range(cfg.surveys_per_block):
            morning = visit < cfg.surveys_per_block // 2
            for _ in range(100):
                day = int(rng.integers(0, cfg.days))
                hour = int(rng.integers(9, 12)) if morning else int(rng.integers(13, 17))
                minute = int(rng.integers(0, 60))
                ts = datetime.combine(cfg.start_date + timedelta(days=day),
                                      time(hour, minute))
                window = _window_start(ts)
                if window not in seen_windows:
                    seen_windows.add(window)
                    break
            else:
                raise DataError("could not place survey visit in a fresh window")
            active = timeline.active_at(ts.timestamp())
            missing = rng.random() < cfg.survey_missing_fraction
            for i in range(face.meter_count):
                surveys.append(SurveyRecord(
                    meter_id=f"{face.id}:m{i}", block_id=face.id,
                    timestamp=None if missing else ts,
                    free=i >= active))
            if not missing:
                truth = survey_truth.setdefault(face.id, {})
                truth[window.isoformat()] = int(active < face.meter_count)

    # ground truth availability at half past each hour, averaged over days
    hourly: dict[str, list[float]] = {}
    day0 = datetime.combine(cfg.start_date, time(0, 0)).timestamp()
    for plan in plans:
        face = plan.face
        if face.meter_count == 0:
            hourly[face.id] = [0.0] * 24
            continue
        timeline = timelines[face.id]
        per_hour = []
        for h in range(24):
            free_days = sum(
                timeline.active_at(day0 + d * 86_400 + h * 3600 + 1800.0) < face.meter_count
                for d in range(cfg.days))
            per_hour.append(free_days / cfg.days)
        hourly[face.id] = per_hour

    # lots and their hourly entry records
    lot_nodes = cfg.lot_nodes or (f"n{(cfg.grid_n - 1) // 2}_{(cfg.grid_n - 1) // 2}",)
    lots = tuple(LotSpec(id=f"lot{i + 1}", node=node, capacity=cfg.lot_capacity)
                 for i, node in enumerate(lot_nodes))
    for lot in lots:
        if lot.node not in graph.nodes:
            raise DataError(f"lot node {lot.node!r} not in the generated grid")

    duration_choices = [3600.0, 7200.0, 10800.0, 14400.0]
    duration_weights = [0.35, 0.30, 0.20, 0.15]
    events: list[LotEventRecord] = []
    for lot in lots:
        scale = lot.capacity / 3.0
        for day in range(cfg.days):
            weekend = (cfg.start_date + timedelta(days=day)).weekday() >= 5
            for h in range(24):
                mean_entries = scale * (0.04 + _lot_shape(h)) * (0.55 if weekend else 1.0)
                entries = int(rng.poisson(mean_entries))
                recorded = int(rng.binomial(entries, 0.95)) if entries else 0
                durations = []
                for _ in range(recorded):
                    if h < cfg.flat_rate_end_hour and rng.random() < 0.30:
                        durations.append((cfg.flat_rate_end_hour - h) * 3600.0)
                    else:
                        durations.append(duration_choices[
                            int(rng.choice(4, p=duration_weights))])
                events.append(LotEventRecord(
                    lot_id=lot.id,
                    hour=datetime.combine(cfg.start_date + timedelta(days=day), time(h, 0)),
                    entries=entries, paid_durations_s=tuple(durations)))

    ground_truth = {
        "format_version": 1,
        "hourly_availability": {k: hourly[k] for k in sorted(hourly)},
        "survey_truth": {k: dict(sorted(survey_truth[k].items()))
                         for k in sorted(survey_truth)},
    }

    save_graph(graph, out / "graph.json")
    write_payments(payments, out / "payments.csv")
    write_surveys(sorted(surveys, key=_survey_sort_key), out / "surveys.csv")
    write_lots(list(lots), out / "lots.json")
    write_lot_events(events, out / "lot_events.csv")
    _atomic_write(out / "ground_truth.json", json.dumps(ground_truth, sort_keys=True))

    return SynthBundle(out_dir=out, graph=graph, payments=tuple(payments),
                       surveys=tuple(surveys), lots=lots,
                       lot_events=tuple(events), ground_truth=ground_truth)


def _survey_sort_key(r: SurveyRecord):
    ts = r.timestamp.isoformat() if r.timestamp is not None else ""
    return (r.block_id, ts, r.meter_id)
