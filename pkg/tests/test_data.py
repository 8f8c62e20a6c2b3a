from datetime import datetime, timedelta

import numpy as np
import pytest

from glucast.data import (
    CsvSchema,
    RawReadings,
    SYNTH_GAP_STEPS,
    calibrate_to_glucose,
    denormalize,
    load_csv,
    make_windows,
    normalize,
    resample_uniform,
    synth_generate,
    write_series_csv,
    TimeSeries,
)

T0 = datetime(2024, 1, 1)
STEP = timedelta(minutes=5)


def minutes(ks):
    return [T0 + timedelta(minutes=k) for k in ks]


def make_ts(values, mask=None, series_id="s"):
    values = np.asarray(values, dtype=np.float64)
    if mask is None:
        mask = np.isfinite(values if values.ndim == 1 else values[:, 0])
    return TimeSeries(series_id, T0, STEP, values, mask)


class TestLoadCsv:
    def test_empty_data_section(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("timestamp,glucose\n")
        assert load_csv(str(p)) == []

    def test_three_exact_rows(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text(
            "timestamp,glucose\n"
            "2024-01-01T00:00:00,100\n"
            "2024-01-01T00:05:00,110\n"
            "2024-01-01T00:10:00,120\n"
        )
        (ts,) = load_csv(str(p))
        assert len(ts) == 3
        assert ts.mask.all()
        np.testing.assert_array_equal(ts.values[:, 0], [100, 110, 120])

    def test_25_minute_hole_gives_4_masked_steps(self, tmp_path):
        p = tmp_path / "hole.csv"
        p.write_text(
            "timestamp,glucose\n"
            "2024-01-01T00:00:00,100\n"
            "2024-01-01T00:25:00,130\n"
        )
        (ts,) = load_csv(str(p))
        assert len(ts) == 6
        assert (~ts.mask).sum() == 4

    def test_unparseable_row_reports_line_number(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("timestamp,glucose\n2024-01-01T00:00:00,100\n2024-01-01T00:05:00,oops\n")
        with pytest.raises(ValueError, match="line 3"):
            load_csv(str(p))

    def test_bad_timestamp_reports_line_number(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("timestamp,glucose\nnot-a-date,100\n")
        with pytest.raises(ValueError, match="line 2"):
            load_csv(str(p))

    def test_duplicate_timestamp_rejected(self, tmp_path):
        p = tmp_path / "dup.csv"
        p.write_text(
            "timestamp,glucose\n"
            "2024-01-01T00:00:00,100\n"
            "2024-01-01T00:00:00,105\n"
        )
        with pytest.raises(ValueError, match="duplicate"):
            load_csv(str(p))

    def test_non_monotone_rejected(self, tmp_path):
        p = tmp_path / "mono.csv"
        p.write_text(
            "timestamp,glucose\n"
            "2024-01-01T00:05:00,100\n"
            "2024-01-01T00:00:00,105\n"
        )
        with pytest.raises(ValueError, match="non-monotone"):
            load_csv(str(p))

    def test_glucose_range_enforced(self, tmp_path):
        p = tmp_path / "range.csv"
        p.write_text("timestamp,glucose\n2024-01-01T00:00:00,1200\n")
        with pytest.raises(ValueError, match="outside"):
            load_csv(str(p))

    def test_multi_series_and_extra_channels(self, tmp_path):
        p = tmp_path / "multi.csv"
        p.write_text(
            "series_id,timestamp,glucose,insulin\n"
            "p1,2024-01-01T00:00:00,100,1.5\n"
            "p1,2024-01-01T00:05:00,110,\n"
            "p2,2024-01-01T00:00:00,90,0.0\n"
        )
        series = load_csv(str(p), CsvSchema(extra_channels=("insulin",)))
        assert [s.series_id for s in series] == ["p1", "p2"]
        assert series[0].channels == ("glucose", "insulin")
        assert series[0].values[1, 1] == 0.0  # empty event cell reads as 0

    def test_round_trip_with_write(self, tmp_path):
        triple = synth_generate(150, seed=4)
        ts3 = calibrate_to_glucose(triple.series[2])
        path = tmp_path / "ts3.csv"
        write_series_csv(ts3, str(path))
        (back,) = load_csv(str(path))
        assert len(back) == len(ts3)
        np.testing.assert_array_equal(back.mask, ts3.mask)
        np.testing.assert_allclose(back.values[back.mask], ts3.values[ts3.mask], rtol=0, atol=0)


class TestResample:
    def test_identity_on_uniform(self):
        raw = RawReadings("s", minutes([0, 5, 10]), np.array([[1.0], [2.0], [3.0]]))
        ts = resample_uniform(raw, STEP)
        assert len(ts) == 3 and ts.mask.all()
        np.testing.assert_array_equal(ts.values[:, 0], [1, 2, 3])

    def test_seven_minute_offset_follows_half_step_rule(self):
        raw = RawReadings("s", minutes([0, 7]), np.array([[1.0], [2.0]]))
        ts = resample_uniform(raw, STEP)
        # slots at 0, 5, 10; the +7 reading is 2 <= 2.5 from slot 5, 3 > 2.5 from slot 10
        assert len(ts) == 3
        np.testing.assert_array_equal(ts.mask, [True, True, False])
        assert ts.values[1, 0] == 2.0

    def test_readings_20_minutes_apart(self):
        raw = RawReadings("s", minutes([0, 20]), np.array([[1.0], [2.0]]))
        ts = resample_uniform(raw, STEP)
        assert len(ts) == 5
        np.testing.assert_array_equal(ts.mask, [True, False, False, False, True])

    def test_never_fabricates_values(self):
        gen = np.random.default_rng(5)
        offsets = np.sort(gen.uniform(0, 300, 40))
        vals = gen.uniform(80, 120, 40)[:, None]
        raw = RawReadings("s", [T0 + timedelta(minutes=float(o)) for o in offsets], vals)
        ts = resample_uniform(raw, STEP)
        for k in np.flatnonzero(ts.mask):
            assert ts.values[k, 0] in vals[:, 0]
        assert np.isnan(ts.values[~ts.mask, 0]).all()


class TestWindows:
    def test_exactly_one_window(self):
        ts = make_ts(np.arange(10.0) + 100.0)
        ds = make_windows([ts], T=6, w=4, stride=1, split_frac=1.0)
        assert len(ds) == 1
        np.testing.assert_array_equal(ds.X[0, :, 0], np.arange(6.0) + 100.0)
        np.testing.assert_array_equal(ds.Y[0, :, 0], np.arange(6.0, 10.0) + 100.0)

    def test_three_windows_from_length_T_plus_w_plus_2(self):
        ts = make_ts(np.arange(12.0) + 100.0)
        ds = make_windows([ts], T=6, w=4, stride=1, split_frac=1.0)
        assert len(ds) == 3
        np.testing.assert_array_equal(ds.origin_start, [0, 1, 2])

    def test_gap_in_every_horizon_drops_all(self):
        vals = np.arange(12.0) + 100.0
        mask = np.ones(12, dtype=bool)
        mask[7:] = False  # poisons every candidate target
        ds = make_windows([make_ts(vals, mask)], T=6, w=4, stride=1, split_frac=1.0)
        assert len(ds) == 0
        assert ds.dropped_invalid == 3

    def test_underobserved_input_dropped(self):
        vals = np.arange(20.0) + 100.0
        mask = np.ones(20, dtype=bool)
        mask[0:4] = False  # first window has 2/6 observed
        ds = make_windows([make_ts(vals, mask)], T=6, w=2, stride=1, split_frac=1.0)
        assert 0 not in ds.origin_start

    def test_stride_consistency(self):
        ts = make_ts(np.arange(40.0) + 100.0)
        ds = make_windows([ts], T=5, w=2, stride=3, split_frac=1.0)
        assert np.all(np.diff(ds.origin_start) == 3)

    def test_split_no_time_overlap(self):
        ts = make_ts(np.arange(100.0) + 100.0)
        ds = make_windows([ts], T=10, w=5, stride=1)
        train_end = ds.origin_start[ds.train_idx] + ds.T + ds.w
        test_start = ds.origin_start[ds.test_idx]
        assert train_end.max() <= test_start.min()
        assert ds.dropped_boundary > 0

    def test_train_precedes_test(self):
        ts = make_ts(np.arange(100.0) + 100.0)
        ds = make_windows([ts], T=10, w=5, stride=1)
        assert ds.origin_start[ds.train_idx].max() < ds.origin_start[ds.test_idx].min()


class TestNormalize:
    def make_ds(self):
        gen = np.random.default_rng(11)
        ts = make_ts(gen.uniform(80, 160, 200))
        return make_windows([ts], T=8, w=4, stride=1)

    def test_round_trip(self):
        ds = self.make_ds()
        nds = normalize(ds)
        np.testing.assert_allclose(denormalize(nds.X, nds), ds.X, atol=1e-12)
        np.testing.assert_allclose(denormalize(nds.Y, nds), ds.Y, atol=1e-12)

    def test_train_stats_are_zero_one(self):
        nds = normalize(self.make_ds())
        obs = nds.X[nds.train_idx][nds.X_mask[nds.train_idx]]
        assert abs(obs.mean()) < 1e-9
        assert abs(obs.std() - 1.0) < 1e-9

    def test_stats_ignore_test_windows(self):
        ds = self.make_ds()
        tampered = normalize(ds)
        ds2 = self.make_ds()
        ds2.X[ds2.test_idx] += 500.0  # perturb test inputs only
        tampered2 = normalize(ds2)
        np.testing.assert_array_equal(tampered.norm_mean, tampered2.norm_mean)
        np.testing.assert_array_equal(tampered.norm_std, tampered2.norm_std)

    def test_zero_variance_rejected(self):
        ts = make_ts(np.full(50, 120.0))
        ds = make_windows([ts], T=5, w=2, stride=1)
        with pytest.raises(ValueError, match="variance"):
            normalize(ds)

    def test_double_normalize_rejected(self):
        nds = normalize(self.make_ds())
        with pytest.raises(ValueError):
            normalize(nds)


class TestSynth:
    def test_deterministic(self):
        a = synth_generate(200, seed=7)
        b = synth_generate(200, seed=7)
        for s1, s2 in zip(a.series, b.series):
            np.testing.assert_array_equal(s1.mask, s2.mask)
            np.testing.assert_array_equal(s1.values[s1.mask], s2.values[s2.mask])
        assert a.gap_start == b.gap_start

    def test_gap_is_exactly_60_steps(self):
        triple = synth_generate(300, seed=0)
        ts3 = triple.series[2]
        assert (~ts3.mask).sum() == SYNTH_GAP_STEPS
        gap = np.flatnonzero(~ts3.mask)
        assert gap[-1] - gap[0] + 1 == SYNTH_GAP_STEPS  # contiguous

    def test_noise_free_is_exact_sine(self):
        triple = synth_generate(150, seed=3, noise_scale=0.0)
        t = np.arange(150.0)
        np.testing.assert_allclose(triple.series[0].values[:, 0], np.sin(2 * np.pi * t / 12), atol=0)
        np.testing.assert_allclose(triple.series[1].values[:, 0], np.sin(2 * np.pi * t / 6), atol=0)

    def test_truth_retained_under_gap(self):
        triple = synth_generate(240, seed=9)
        ts3 = triple.series[2]
        gap = slice(triple.gap_start, triple.gap_start + SYNTH_GAP_STEPS)
        assert np.isnan(ts3.values[gap, 0]).all()
        assert np.isfinite(triple.ts3_truth[gap]).all()
        outside = ts3.mask
        np.testing.assert_array_equal(ts3.values[outside, 0], triple.ts3_truth[outside])

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            synth_generate(100, seed=0)

    def test_calibration_stays_physiological_at_seed_zero(self):
        triple = synth_generate(1440, seed=0)
        for ts in triple.series:
            cal = calibrate_to_glucose(ts)
            obs = cal.values[cal.mask, 0]
            assert np.all(obs > 0) and np.all(obs < 1000)
