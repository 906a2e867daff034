"""Survey combining, departure smoothing, rate estimation, synthetic city."""

from __future__ import annotations

import json
import math
from datetime import date, datetime, timedelta

import numpy as np
import pytest

from parksim.data_ingest import (
    LotEventRecord,
    SmoothingConfig,
    SurveyRecord,
    SynthConfig,
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
from parksim.errors import DataError
from parksim.road_graph import load_graph

from oracles import left_gaussian_weights

D = date(2026, 3, 2)  # a Monday


def dt(day_offset=0, hour=0, minute=0):
    return datetime(2026, 3, 2 + day_offset, hour, minute)


class TestCombineSurveys:
    def test_any_free_meter_marks_block_available(self):
        records = [
            SurveyRecord("m1", "b1", dt(0, 10, 5), False),
            SurveyRecord("m2", "b1", dt(0, 10, 10), False),
            SurveyRecord("m3", "b1", dt(0, 10, 20), True),
        ]
        result = combine_surveys(records)
        assert len(result.samples) == 1
        sample = result.samples[0]
        assert sample.available == 1
        assert sample.time == dt(0, 10, 15)  # window midpoint

    def test_missing_timestamps_discarded_and_counted(self):
        records = [
            SurveyRecord("m1", "b1", None, True),
            SurveyRecord("m2", "b1", dt(0, 9, 40), False),
        ]
        result = combine_surveys(records)
        assert result.discarded == 1
        assert len(result.samples) == 1
        assert result.samples[0].available == 0

    def test_windows_split_on_half_hours(self):
        records = [
            SurveyRecord("m1", "b1", dt(0, 10, 20), True),
            SurveyRecord("m1", "b1", dt(0, 10, 40), False),
        ]
        result = combine_surveys(records)
        assert len(result.samples) == 2
        assert [s.available for s in result.samples] == [1, 0]

    def test_one_sample_per_block_window(self):
        rng = np.random.default_rng(4)
        records = []
        for _ in range(500):
            block = f"b{rng.integers(4)}"
            ts = dt(0, int(rng.integers(8, 18)), int(rng.integers(60)))
            records.append(SurveyRecord("m", block, ts, bool(rng.integers(2))))
        result = combine_surveys(records)
        keys = [(s.block_id, s.time) for s in result.samples]
        assert len(keys) == len(set(keys))


class TestDeriveDepartures:
    def test_expiry_hour(self):
        events = [LotEventRecord("lot1", dt(0, 9), 1, (7200.0,))]
        out = derive_departures(events)
        assert out == {"lot1": {dt(0, 11): 1.0}}

    def test_empty_input(self):
        assert derive_departures([]) == {}

    def test_conservation(self):
        rng = np.random.default_rng(8)
        events = []
        total = 0
        for day in range(3):
            for h in range(24):
                n = int(rng.integers(0, 6))
                durations = tuple(float(rng.integers(1, 30) * 600) for _ in range(n))
                total += n
                events.append(LotEventRecord("lot1", dt(day, h), n, durations))
        out = derive_departures(events)
        assert sum(out["lot1"].values()) == total

    def test_negative_duration_rejected(self):
        with pytest.raises(DataError):
            derive_departures([LotEventRecord("lot1", dt(0, 9), 1, (-60.0,))])


class TestSmoothDepartures:
    def flat_series(self, value=10.0, hours=24):
        return {dt(0, 0) + timedelta(hours=h): value for h in range(hours)}

    def test_no_peak_unchanged(self):
        series = self.flat_series()
        out = smooth_departures(series, SmoothingConfig())
        assert out == series

    def test_spike_redistributed_with_left_gaussian_weights(self):
        series = self.flat_series()
        series[dt(0, 18)] = 110.0
        cfg = SmoothingConfig(peak_hours=(18,), sigma_h=3.5, span_h=12)
        out = smooth_departures(series, cfg)
        weights = left_gaussian_weights(3.5, 12)
        assert out[dt(0, 18)] == pytest.approx(10.0, abs=1e-12)
        for d, w in enumerate(weights, start=1):
            assert out[dt(0, 18 - d)] == pytest.approx(10.0 + 100.0 * w, abs=1e-9)
        assert sum(out.values()) == pytest.approx(sum(series.values()), abs=1e-6)

    def test_redistribution_decays_with_distance(self):
        series = self.flat_series()
        series[dt(0, 18)] = 200.0
        out = smooth_departures(series, SmoothingConfig())
        gains = [out[dt(0, 18 - d)] - 10.0 for d in range(1, 13)]
        assert all(a > b for a, b in zip(gains, gains[1:]))
        assert all(g > 0 for g in gains)

    def test_series_too_short_rejected(self):
        series = {dt(0, 10) + timedelta(hours=h): 5.0 for h in range(10)}
        series[dt(0, 18)] = 80.0
        with pytest.raises(DataError, match="too short"):
            smooth_departures(series, SmoothingConfig())

    def test_random_series_conserve_totals_and_stay_nonnegative(self):
        rng = np.random.default_rng(123)
        cfg = SmoothingConfig(peak_hours=(18,))
        for _ in range(40):
            hours = int(rng.integers(48, 96))
            series = {dt(0, 0) + timedelta(hours=h): float(rng.uniform(0, 20))
                      for h in range(hours)}
            spike_day = int(rng.integers(0, hours // 24))
            key = dt(spike_day, 18)
            series[key] = series.get(key, 0.0) + float(rng.uniform(50, 500))
            out = smooth_departures(series, cfg)
            assert sum(out.values()) == pytest.approx(sum(series.values()), abs=1e-6)
            assert min(out.values()) >= 0.0


class TestEstimateRates:
    def constant_series(self, value, weeks=1):
        return {dt(0, 0) + timedelta(hours=h): value for h in range(weeks * 7 * 24)}

    def test_constant_entries(self):
        entries = {"lot1": self.constant_series(6.0)}
        departures = {"lot1": self.constant_series(5.0)}
        table = estimate_rates(entries, departures, weeks=1)
        for d in range(7):
            for h in range(24):
                assert table.lookup("lot1", d, h) == (6.0, 5.0)

    def test_two_week_mean(self):
        entries = self.constant_series(0.0, weeks=2)
        entries[dt(0, 9)] = 4.0      # Monday 09:00, week one
        entries[dt(7, 9)] = 8.0      # Monday 09:00, week two
        table = estimate_rates({"lot1": entries},
                               {"lot1": self.constant_series(0.0, weeks=2)}, weeks=2)
        assert table.lookup("lot1", 0, 9)[0] == 6.0

    def test_conservation_of_totals(self):
        rng = np.random.default_rng(2)
        entries = {k: float(rng.integers(0, 12)) for k in self.constant_series(0.0, weeks=2)}
        table = estimate_rates({"lot1": entries},
                               {"lot1": self.constant_series(1.0, weeks=2)}, weeks=2)
        slot_total = sum(table.lookup("lot1", d, h)[0]
                         for d in range(7) for h in range(24)) * 2
        assert slot_total == pytest.approx(sum(entries.values()), abs=1e-9)

    def test_missing_slots_listed(self):
        entries = self.constant_series(3.0)
        del entries[dt(2, 13)]
        with pytest.raises(DataError, match="gaps"):
            estimate_rates({"lot1": entries}, {"lot1": self.constant_series(1.0)},
                           weeks=1)


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    cfg = SynthConfig(grid_n=4, days=7, demand_scale=0.9)
    return synth_generate(cfg, seed=505, out_dir=tmp_path_factory.mktemp("city"))


class TestSynthGenerate:
    def test_bundle_files_load_through_public_readers(self, bundle):
        out = bundle.out_dir
        g = load_graph(out / "graph.json")
        assert len(g.nodes) == 16
        assert len(g.edges) == 4 * 4 * 3  # grid edge count, both directions
        assert read_payments(out / "payments.csv")
        assert read_surveys(out / "surveys.csv")
        assert read_lots(out / "lots.json")
        assert read_lot_events(out / "lot_events.csv")

    def test_ten_by_ten_grid_counts(self, tmp_path):
        cfg = SynthConfig(grid_n=10, days=7, demand_scale=0.05)
        b = synth_generate(cfg, seed=1, out_dir=tmp_path / "big")
        g = load_graph(b.out_dir / "graph.json")
        assert len(g.nodes) == 100
        assert len(g.edges) == 360

    def test_fixed_seed_byte_identical(self, tmp_path):
        cfg = SynthConfig(grid_n=3, days=7)
        a = synth_generate(cfg, seed=77, out_dir=tmp_path / "a")
        b = synth_generate(cfg, seed=77, out_dir=tmp_path / "b")
        from parksim.data_ingest import BUNDLE_FILES
        for name in BUNDLE_FILES:
            assert (a.out_dir / name).read_bytes() == (b.out_dir / name).read_bytes(), name

    def test_full_observation_is_superset_of_partial(self, tmp_path):
        partial = synth_generate(SynthConfig(grid_n=3, days=7, observed_fraction=0.6),
                                 seed=9, out_dir=tmp_path / "p")
        full = synth_generate(SynthConfig(grid_n=3, days=7, observed_fraction=1.0),
                              seed=9, out_dir=tmp_path / "f")
        assert set(partial.payments) <= set(full.payments)
        assert len(full.payments) > len(partial.payments)

    def test_surveys_agree_with_recorded_ground_truth(self, bundle):
        truth = bundle.ground_truth["survey_truth"]
        combined = combine_surveys(bundle.surveys)
        assert combined.samples
        checked = 0
        for s in combined.samples:
            window = (s.time - timedelta(minutes=15)).isoformat()
            assert truth[s.block_id][window] == s.available
            checked += 1
        total_truth = sum(len(v) for v in truth.values())
        assert checked == total_truth

    def test_survey_missingness_visit_level(self, bundle):
        # a visit either keeps all its meter rows or loses all timestamps
        by_key: dict[tuple[str, str], set[bool]] = {}
        blank_runs: dict[str, int] = {}
        for r in bundle.surveys:
            if r.timestamp is None:
                blank_runs[r.block_id] = blank_runs.get(r.block_id, 0) + 1
        meters = 5
        assert all(count % meters == 0 for count in blank_runs.values())

    def test_center_busier_than_corner(self, bundle):
        hourly = bundle.ground_truth["hourly_availability"]
        g = bundle.graph
        mids = {}
        for eid, e in g.edges.items():
            a, b = g.nodes[e.from_node], g.nodes[e.to_node]
            mids[eid] = ((a.lat + b.lat) / 2, (a.lon + b.lon) / 2)
        center = (sum(m[0] for m in mids.values()) / len(mids),
                  sum(m[1] for m in mids.values()) / len(mids))
        metered = [eid for eid, e in g.edges.items() if e.meter_count > 0]
        ranked = sorted(metered, key=lambda eid: math.hypot(
            mids[eid][0] - center[0], (mids[eid][1] - center[1]) * 0.69))
        midday = lambda eid: np.mean(hourly[eid][11:16])
        central_avail = np.mean([midday(eid) for eid in ranked[:6]])
        corner_avail = np.mean([midday(eid) for eid in ranked[-6:]])
        assert central_avail < corner_avail

    def test_rates_pipeline_round_trip(self, bundle, tmp_path):
        events = read_lot_events(bundle.out_dir / "lot_events.csv")
        entries = entries_series(events)
        departures = derive_departures(events)
        start = min(entries["lot1"])
        hours = 7 * 24
        aligned_dep = {"lot1": align_series(
            smooth_departures(departures["lot1"], SmoothingConfig(peak_hours=(18,))),
            start, hours)}
        table = estimate_rates(entries, aligned_dep, weeks=1)
        path = tmp_path / "rates.csv"
        write_rates_csv(table, path)
        again = read_rates_csv(path)
        assert again.rates == table.rates

    def test_samples_csv_round_trip(self, bundle, tmp_path):
        combined = combine_surveys(bundle.surveys)
        path = tmp_path / "samples.csv"
        write_samples_csv(list(combined.samples), path)
        assert tuple(read_samples_csv(path)) == combined.samples
